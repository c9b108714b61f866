#pragma once

// Umbrella header for the whole harness.

#include "cwall/corpus.hpp"
#include "cwall/diff.hpp"
#include "cwall/executor.hpp"
#include "cwall/importer.hpp"
#include "cwall/lang.hpp"
#include "cwall/metrics.hpp"
#include "cwall/modelclient.hpp"
#include "cwall/pipeline.hpp"
#include "cwall/prompts.hpp"
#include "cwall/report.hpp"
#include "cwall/runner.hpp"
#include "cwall/sha256.hpp"
#include "cwall/util.hpp"
#include "cwall/version.hpp"
