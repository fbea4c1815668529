#pragma once

#include "tosgp/archive.hpp"
#include "tosgp/config.hpp"
#include "tosgp/dimred.hpp"
#include "tosgp/error.hpp"
#include "tosgp/export.hpp"
#include "tosgp/gp.hpp"
#include "tosgp/graph.hpp"
#include "tosgp/io.hpp"
#include "tosgp/ot.hpp"
#include "tosgp/pipeline.hpp"
#include "tosgp/plan_cache.hpp"
#include "tosgp/reference.hpp"
#include "tosgp/swwl.hpp"
