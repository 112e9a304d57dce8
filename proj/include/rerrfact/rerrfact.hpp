#pragma once

#include "rerrfact/classifier.hpp"
#include "rerrfact/config.hpp"
#include "rerrfact/corpus.hpp"
#include "rerrfact/errors.hpp"
#include "rerrfact/eval.hpp"
#include "rerrfact/pipeline.hpp"
#include "rerrfact/predictions.hpp"
#include "rerrfact/representation.hpp"
#include "rerrfact/retrieval.hpp"
#include "rerrfact/scorer.hpp"
#include "rerrfact/text.hpp"
