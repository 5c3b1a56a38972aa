#pragma once

// Convenience include for the whole library.

#include "hva/attention.hpp"
#include "hva/autodiff.hpp"
#include "hva/blocks.hpp"
#include "hva/cam.hpp"
#include "hva/checkpoint.hpp"
#include "hva/cli.hpp"
#include "hva/common.hpp"
#include "hva/cross_view.hpp"
#include "hva/data.hpp"
#include "hva/fusion.hpp"
#include "hva/linalg.hpp"
#include "hva/loss.hpp"
#include "hva/metrics.hpp"
#include "hva/network.hpp"
#include "hva/ops_basic.hpp"
#include "hva/ops_conv.hpp"
#include "hva/ops_norm.hpp"
#include "hva/ops_pool.hpp"
#include "hva/optim.hpp"
#include "hva/synth.hpp"
#include "hva/tensor.hpp"
#include "hva/train.hpp"
#include "hva/views.hpp"
