#pragma once

#include "rolerel/config.hpp"
#include "rolerel/corpus.hpp"
#include "rolerel/embedding.hpp"
#include "rolerel/eval.hpp"
#include "rolerel/features.hpp"
#include "rolerel/forest.hpp"
#include "rolerel/pipeline.hpp"
#include "rolerel/random.hpp"
