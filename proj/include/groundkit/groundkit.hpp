#ifndef GROUNDKIT_GROUNDKIT_HPP
#define GROUNDKIT_GROUNDKIT_HPP

#include "groundkit/analysis.hpp"
#include "groundkit/config.hpp"
#include "groundkit/corpus.hpp"
#include "groundkit/error.hpp"
#include "groundkit/localization.hpp"
#include "groundkit/metrics.hpp"
#include "groundkit/model.hpp"
#include "groundkit/pipeline.hpp"
#include "groundkit/synth.hpp"
#include "groundkit/trainer.hpp"
#include "groundkit/util.hpp"

#endif
