#pragma once

#include "tt2rnn/data_io.hpp"
#include "tt2rnn/dataset.hpp"
#include "tt2rnn/experiment.hpp"
#include "tt2rnn/io.hpp"
#include "tt2rnn/linalg.hpp"
#include "tt2rnn/metrics.hpp"
#include "tt2rnn/models.hpp"
#include "tt2rnn/recovery.hpp"
#include "tt2rnn/refine.hpp"
#include "tt2rnn/spectral.hpp"
#include "tt2rnn/tensor.hpp"
#include "tt2rnn/tensor_train.hpp"
