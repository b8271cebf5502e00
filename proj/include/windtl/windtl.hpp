// Convenience header pulling in every windtl module.
#pragma once

#include "windtl/baseline.hpp"
#include "windtl/cli.hpp"
#include "windtl/csge.hpp"
#include "windtl/dataset_io.hpp"
#include "windtl/lifecycle.hpp"
#include "windtl/metrics.hpp"
#include "windtl/multitask.hpp"
#include "windtl/nnet.hpp"
#include "windtl/novelty.hpp"
#include "windtl/preselect.hpp"
#include "windtl/scenario.hpp"
#include "windtl/synthdata.hpp"
#include "windtl/transfer.hpp"
#include "windtl/types.hpp"
