#pragma once

#include "htlab/bem_dtn.hpp"
#include "htlab/eigsolve.hpp"
#include "htlab/ellipse_modes.hpp"
#include "htlab/fem.hpp"
#include "htlab/geometry.hpp"
#include "htlab/io.hpp"
#include "htlab/mesh.hpp"
#include "htlab/quadrature.hpp"
#include "htlab/specfun.hpp"
#include "htlab/spectral_lab.hpp"
