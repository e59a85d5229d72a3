#pragma once

#include "predbias/balanced_learning.hpp"
#include "predbias/dataset.hpp"
#include "predbias/error.hpp"
#include "predbias/freq_model.hpp"
#include "predbias/information_content.hpp"
#include "predbias/io.hpp"
#include "predbias/metrics.hpp"
#include "predbias/pipeline.hpp"
#include "predbias/rng.hpp"
#include "predbias/semantic_debias.hpp"
#include "predbias/square_matrix.hpp"
#include "predbias/synth.hpp"
