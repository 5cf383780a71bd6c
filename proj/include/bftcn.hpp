#pragma once

#include "bftcn/adam.hpp"
#include "bftcn/checkpoint.hpp"
#include "bftcn/data_io.hpp"
#include "bftcn/errors.hpp"
#include "bftcn/experiment.hpp"
#include "bftcn/gradcheck.hpp"
#include "bftcn/layers.hpp"
#include "bftcn/loss.hpp"
#include "bftcn/matrix.hpp"
#include "bftcn/metrics.hpp"
#include "bftcn/model.hpp"
#include "bftcn/probe.hpp"
#include "bftcn/stream.hpp"
#include "bftcn/synth.hpp"
#include "bftcn/train.hpp"
#include "bftcn/window.hpp"
