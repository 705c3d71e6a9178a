#pragma once

#include "acd.hpp"
#include "coloring.hpp"
#include "common.hpp"
#include "congest.hpp"
#include "dense.hpp"
#include "generators.hpp"
#include "graph.hpp"
#include "hash.hpp"
#include "oracle.hpp"
#include "pipeline.hpp"
#include "primitives.hpp"
#include "reduce.hpp"
#include "runtime.hpp"
#include "slack.hpp"
