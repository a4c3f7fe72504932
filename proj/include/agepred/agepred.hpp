#pragma once

// Umbrella header: the whole pipeline in one include.

#include "agepred/csv.hpp"
#include "agepred/domain.hpp"
#include "agepred/evaluate.hpp"
#include "agepred/featurize.hpp"
#include "agepred/ingest.hpp"
#include "agepred/linalg.hpp"
#include "agepred/log.hpp"
#include "agepred/models.hpp"
#include "agepred/select.hpp"
#include "agepred/synth.hpp"
