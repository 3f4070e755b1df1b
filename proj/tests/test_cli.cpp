#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "htlab/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("htlab_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args, const fs::path& out) {
  const std::string cmd = std::string(HTLAB_CLI) + " --out " + out.string() + " " + args + " > " + (out / "stdout.txt").string() + " 2> " +
                          (out / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  return json::parse(is);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli modes writes the reference frequencies") {
  TempDir t;
  REQUIRE(run("modes --a1 1 --a2 0.5 --mode e:1:0 --mode o:0:3", t.path) == 0);
  const auto j = read_json(t.path / "modes.json");
  CHECK(j["format"] == 1);
  REQUIRE(j["modes"].size() == 2);
  CHECK(j["modes"][0]["k"].get<double>() == Catch::Approx(9.977120156613617).epsilon(1e-9));
  CHECK(j["modes"][1]["k"].get<double>() == Catch::Approx(9.17017539835808).epsilon(1e-9));
  CHECK(j["modes"][1]["parity"] == "odd");
}

TEST_CASE("cli usage errors exit with 1") {
  TempDir t;
  CHECK(run("", t.path) == 1);
  CHECK(run("modes --a1 1 --a2 0.5", t.path) == 1);
  CHECK(run("modes --a1 1 --a2 0.5 --mode x:1:0", t.path) == 1);
  CHECK(run("modes --a1 0.5 --a2 1 --mode e:0:0", t.path) == 1);
  CHECK(run("--seed XYZ modes --a1 1 --a2 0.5 --mode e:0:0", t.path) == 1);
  CHECK(run("spectrum --k -1", t.path) == 1);
  CHECK(run("spectrum --k 5 --backend magic", t.path) == 1);
  CHECK(run("check-theorem1 --alpha 4.4", t.path) == 1);
  CHECK(run("sweep --step 0", t.path) == 1);
  CHECK(run("--help", t.path) == 0);
  CHECK(slurp(t.path / "stdout.txt").find("check-theorem1") != std::string::npos);
}

TEST_CASE("cli spectrum writes spectra.csv") {
  TempDir t;
  REQUIRE(run("spectrum --cavity small --k 5 --R 1.5 --meshwidth 0.06 --nev 3", t.path) == 0);
  std::ifstream is(t.path / "spectra.csv");
  const auto rows = htlab::io::read_spectra_csv(is);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.k == 5);
    CHECK(r.residual < 1e-8);
    CHECK(r.mu.imag() <= 1e-6);
    CHECK(r.track_id == -1);
  }
}

TEST_CASE("cli config file with flag override") {
  TempDir t;
  {
    std::ofstream cfg(t.path / "cfg.json");
    cfg << R"({"spectrum": {"k": 4.0, "nev": 2, "R": 1.5, "meshwidth": 0.06}})";
  }
  REQUIRE(run("--config " + (t.path / "cfg.json").string() + " spectrum --nev 3", t.path) == 0);
  std::ifstream is(t.path / "spectra.csv");
  const auto rows = htlab::io::read_spectra_csv(is);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].k == 4);
}

TEST_CASE("cli sweep writes tracks and the box count") {
  TempDir t;
  REQUIRE(run("sweep --cavity large --kmin 5 --kmax 5.2 --step 0.05 --nev 3 --meshwidth 0.06", t.path) == 0);
  const auto bc = read_json(t.path / "boxcount.json");
  CHECK(bc["format"] == 1);
  CHECK(bc["k_grid_size"] == 4);
  CHECK(bc["count"].get<int>() == static_cast<int>(bc["track_ids"].size()));
  std::ifstream is(t.path / "spectra.csv");
  const auto rows = htlab::io::read_spectra_csv(is);
  CHECK(rows.size() == 12);
  for (const auto& r : rows) CHECK(r.track_id >= 0);
}

TEST_CASE("cli eigenfunction, quasimode, theorem check and mesh export") {
  TempDir t;
  REQUIRE(run("eigenfunction --k 5 --R 1.5 --meshwidth 0.06 --nev 2 --index 1 --grid 16", t.path) == 0);
  CHECK(slurp(t.path / "field.csv").rfind("x,y,abs_u\n", 0) == 0);
  CHECK(run("eigenfunction --k 5 --R 1.5 --meshwidth 0.06 --nev 2 --index 2 --grid 16", t.path) == 1);

  REQUIRE(run("quasimode --cavity large --mode e:3:0 --mode o:2:4 --window 22.5,22.7", t.path) == 0);
  const auto q = read_json(t.path / "quasimode.json");
  CHECK(q["format"] == 1);
  CHECK(q["multiplicity"]["m"] == 2);

  REQUIRE(run("check-theorem1 --mode e:0:0 --alpha 4.6 --R 1.5 --meshwidth 0.04 --nev 2", t.path) == 0);
  const auto th = read_json(t.path / "theorem1.json");
  CHECK(th["applicable"] == true);
  CHECK(th.contains("mu_min"));
  CHECK(th.contains("bound"));

  REQUIRE(run("mesh-export --cavity small --R 1.5 --meshwidth 0.1 --matrices", t.path) == 0);
  CHECK(slurp(t.path / "mesh.htmesh").rfind("HTMESH 1\n", 0) == 0);
  for (const char* f : {"geometry.json", "stiffness.txt", "mass.txt", "helmholtz.txt"}) CHECK(fs::exists(t.path / f));
  CHECK(read_json(t.path / "geometry.json")["kind"] == "small");
}

TEST_CASE("cli geometry and mesh inputs") {
  TempDir t;
  REQUIRE(run("mesh-export --cavity large --R 1.5 --meshwidth 0.08", t.path) == 0);
  fs::create_directories(t.path / "b");
  REQUIRE(run("spectrum --geometry " + (t.path / "geometry.json").string() + " --mesh " + (t.path / "mesh.htmesh").string() +
                  " --k 4 --nev 2",
              t.path / "b") == 0);
  CHECK(fs::exists(t.path / "b" / "spectra.csv"));
  CHECK(run("spectrum --mesh /nonexistent.htmesh --k 4", t.path) == 1);
}

TEST_CASE("cli numerical failure exits with 2") {
  TempDir t;
  {
    std::ofstream g(t.path / "disc.json");
    g << R"({"kind": "disc", "R": 2.0})";
  }
  // interior Dirichlet resonance of the disc: the single-layer block is singular
  CHECK(run("spectrum --geometry " + (t.path / "disc.json").string() + " --meshwidth 0.1 --k 1.2024127788478865 --nev 2", t.path) == 2);
  CHECK(slurp(t.path / "stderr.txt").find("k = ") != std::string::npos);
}
