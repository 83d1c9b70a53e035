#pragma once

#include "salsa2d/common.hpp"
#include "salsa2d/convergence.hpp"
#include "salsa2d/design.hpp"
#include "salsa2d/fit.hpp"
#include "salsa2d/geometry.hpp"
#include "salsa2d/graph.hpp"
#include "salsa2d/io.hpp"
#include "salsa2d/modelavg.hpp"
#include "salsa2d/ppm.hpp"
#include "salsa2d/salsa.hpp"
#include "salsa2d/serialize.hpp"
#include "salsa2d/synthetic.hpp"
#include "salsa2d/terms.hpp"
