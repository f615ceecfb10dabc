#pragma once

#include "cryptoknight/common/bytes.hpp"
#include "cryptoknight/common/error.hpp"
#include "cryptoknight/common/rng.hpp"
#include "cryptoknight/isa/analysis.hpp"
#include "cryptoknight/isa/assembler.hpp"
#include "cryptoknight/isa/opcode.hpp"
#include "cryptoknight/isa/program.hpp"
#include "cryptoknight/isa/rewriter.hpp"
#include "cryptoknight/isa/validate.hpp"
#include "cryptoknight/synth/codegen.hpp"
#include "cryptoknight/synth/constants.hpp"
#include "cryptoknight/synth/dataset.hpp"
#include "cryptoknight/synth/inject.hpp"
#include "cryptoknight/synth/obfuscation.hpp"
#include "cryptoknight/synth/spec.hpp"
#include "cryptoknight/synth/synthesize.hpp"
#include "cryptoknight/synth/templates.hpp"
#include "cryptoknight/tracer/blocks.hpp"
#include "cryptoknight/tracer/dump.hpp"
#include "cryptoknight/tracer/entropy.hpp"
#include "cryptoknight/tracer/machine.hpp"
#include "cryptoknight/tracer/trace.hpp"
#include "cryptoknight/features/sentence.hpp"
#include "cryptoknight/dcnn/config.hpp"
#include "cryptoknight/dcnn/layers.hpp"
#include "cryptoknight/dcnn/model.hpp"
#include "cryptoknight/dcnn/train.hpp"
#include "cryptoknight/dcnn/search.hpp"
#include "cryptoknight/dcnn/checkpoint.hpp"
#include "cryptoknight/harness/container.hpp"
#include "cryptoknight/harness/commands.hpp"
