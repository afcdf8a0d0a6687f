#pragma once

#include "sepsis_hmm/analysis.hpp"
#include "sepsis_hmm/cohort_sim.hpp"
#include "sepsis_hmm/criteria.hpp"
#include "sepsis_hmm/decode.hpp"
#include "sepsis_hmm/errors.hpp"
#include "sepsis_hmm/forward_backward.hpp"
#include "sepsis_hmm/ingest.hpp"
#include "sepsis_hmm/io.hpp"
#include "sepsis_hmm/kde.hpp"
#include "sepsis_hmm/model.hpp"
#include "sepsis_hmm/parallel.hpp"
#include "sepsis_hmm/random.hpp"
#include "sepsis_hmm/sampler.hpp"
