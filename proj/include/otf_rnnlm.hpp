#pragma once

#include "otf_rnnlm/bench.hpp"
#include "otf_rnnlm/config.hpp"
#include "otf_rnnlm/context_table.hpp"
#include "otf_rnnlm/decoder.hpp"
#include "otf_rnnlm/error.hpp"
#include "otf_rnnlm/huffman.hpp"
#include "otf_rnnlm/lattice.hpp"
#include "otf_rnnlm/ngram.hpp"
#include "otf_rnnlm/rescore_cache.hpp"
#include "otf_rnnlm/rnnlm.hpp"
#include "otf_rnnlm/rnnlm_train.hpp"
#include "otf_rnnlm/transfer_codec.hpp"
#include "otf_rnnlm/vocab.hpp"
