#pragma once

#include "paracosm/ablation.hpp"
#include "paracosm/ablation_grid.hpp"
#include "paracosm/backends.hpp"
#include "paracosm/cache.hpp"
#include "paracosm/datasets.hpp"
#include "paracosm/digest.hpp"
#include "paracosm/embedding.hpp"
#include "paracosm/errors.hpp"
#include "paracosm/feature_store.hpp"
#include "paracosm/fusion.hpp"
#include "paracosm/http_transport.hpp"
#include "paracosm/image.hpp"
#include "paracosm/metrics.hpp"
#include "paracosm/pipeline.hpp"
#include "paracosm/prompts.hpp"
#include "paracosm/ranking.hpp"
#include "paracosm/run_config.hpp"
#include "paracosm/service.hpp"
#include "paracosm/terms.hpp"
#include "paracosm/toy.hpp"
