#pragma once

#include "avse/checkpoint.hpp"
#include "avse/corpus.hpp"
#include "avse/enhancers.hpp"
#include "avse/feature_io.hpp"
#include "avse/filterbank.hpp"
#include "avse/frontend.hpp"
#include "avse/metrics.hpp"
#include "avse/model.hpp"
#include "avse/signal.hpp"
#include "avse/spectrogram.hpp"
#include "avse/training.hpp"
#include "avse/wav.hpp"
