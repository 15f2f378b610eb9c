#pragma once

#include "dmf/error.hpp"
#include "dmf/rng.hpp"
#include "dmf/tensor.hpp"
#include "dmf/autodiff.hpp"
#include "dmf/candidate_ops.hpp"
#include "dmf/hexfloat.hpp"
#include "dmf/dag.hpp"
#include "dmf/trainer.hpp"
#include "dmf/benchmarks.hpp"
#include "dmf/normalize.hpp"
#include "dmf/pde.hpp"
#include "dmf/dataset.hpp"
#include "dmf/fusion.hpp"
#include "dmf/hpo.hpp"
#include "dmf/metrics.hpp"
#include "dmf/experiment.hpp"
