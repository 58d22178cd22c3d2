#pragma once

#include "engage/cluster.hpp"
#include "engage/error.hpp"
#include "engage/ingest.hpp"
#include "engage/metrics.hpp"
#include "engage/pipeline.hpp"
#include "engage/profiles.hpp"
#include "engage/sessions.hpp"
#include "engage/synth.hpp"
#include "engage/time.hpp"
