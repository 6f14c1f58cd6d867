#pragma once

#include "numerics/bessel.hpp"
#include "numerics/linalg.hpp"
#include "numerics/panels.hpp"
#include "numerics/quadrature.hpp"
