#pragma once

#include "dvol/analysis.hpp"
#include "dvol/config.hpp"
#include "dvol/csv.hpp"
#include "dvol/design.hpp"
#include "dvol/geofence.hpp"
#include "dvol/halton.hpp"
#include "dvol/ingest.hpp"
#include "dvol/linalg.hpp"
#include "dvol/measures.hpp"
#include "dvol/models.hpp"
#include "dvol/optim.hpp"
#include "dvol/pipeline.hpp"
#include "dvol/rng.hpp"
#include "dvol/segmentation.hpp"
#include "dvol/stats.hpp"
#include "dvol/svg.hpp"
#include "dvol/synth.hpp"
#include "dvol/types.hpp"
#include "dvol/util.hpp"
#include "dvol/wkt.hpp"
