#pragma once

#include "microricci/corpus.hpp"
#include "microricci/distortion.hpp"
#include "microricci/energy.hpp"
#include "microricci/features.hpp"
#include "microricci/generate.hpp"
#include "microricci/laplacian.hpp"
#include "microricci/mesh.hpp"
#include "microricci/metric.hpp"
#include "microricci/metrics.hpp"
#include "microricci/microricci.hpp"
#include "microricci/mlp.hpp"
#include "microricci/models.hpp"
#include "microricci/obj_io.hpp"
#include "microricci/report.hpp"
#include "microricci/solver.hpp"
#include "microricci/sparse.hpp"
#include "microricci/training.hpp"
#include "microricci/version.hpp"
