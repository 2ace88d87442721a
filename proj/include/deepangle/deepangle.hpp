/// @file deepangle.hpp
/// @brief Convenience header pulling in the whole library.
#pragma once

#include "deepangle/analysis.hpp"
#include "deepangle/benchmark.hpp"
#include "deepangle/common.hpp"
#include "deepangle/direct.hpp"
#include "deepangle/nn.hpp"
#include "deepangle/pipeline.hpp"
#include "deepangle/stats.hpp"
#include "deepangle/synth.hpp"
#include "deepangle/volume.hpp"
