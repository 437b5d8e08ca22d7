#pragma once

// umbrella header

#include "sdsclip/cli/cli.hpp"
#include "sdsclip/core/ops.hpp"
#include "sdsclip/core/optimizer.hpp"
#include "sdsclip/core/param_store.hpp"
#include "sdsclip/core/rng.hpp"
#include "sdsclip/core/tape.hpp"
#include "sdsclip/core/tensor.hpp"
#include "sdsclip/data/benchmark.hpp"
#include "sdsclip/data/scene.hpp"
#include "sdsclip/data/task_io.hpp"
#include "sdsclip/data/vocab.hpp"
#include "sdsclip/eval/harness.hpp"
#include "sdsclip/model/encoder.hpp"
#include "sdsclip/model/teacher.hpp"
#include "sdsclip/report/report.hpp"
#include "sdsclip/train/finetune.hpp"
#include "sdsclip/train/losses.hpp"
#include "sdsclip/train/pretrain.hpp"
