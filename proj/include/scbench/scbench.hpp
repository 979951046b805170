#pragma once

#include "scbench/accelerator.hpp"
#include "scbench/bisc.hpp"
#include "scbench/bitstream.hpp"
#include "scbench/config.hpp"
#include "scbench/error.hpp"
#include "scbench/esl.hpp"
#include "scbench/ingestion.hpp"
#include "scbench/metrics.hpp"
#include "scbench/nn.hpp"
#include "scbench/numeric.hpp"
#include "scbench/random.hpp"
#include "scbench/tensor.hpp"
