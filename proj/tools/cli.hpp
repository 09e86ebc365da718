#pragma once

// Command-line front end. run_cli is the whole program minus main(), so it
// can be driven in-process.

#include <iosfwd>
#include <string>
#include <vector>

#include "bnc/audio_io.hpp"
#include "bnc/checkpoint.hpp"
#include "bnc/model_config.hpp"

namespace bnc {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4 };

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct EvalRow {
  std::string clip;
  double wave_l2 = 0;
  double mel_l2 = 0;
  double itd_err_samples = 0;
  double ild_err_db = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalRow mean;  // clip = "mean"
};

// wave_l2: mean over time of the per-sample stereo L2 distance.
// mel_l2: root mean square difference of the log-mel grids.
// itd/ild: absolute differences of the interaural lag and level.
EvalRow eval_pair(const std::string& clip, const AudioBuffer& pred, const AudioBuffer& ref);
EvalReport eval_dirs(const std::string& pred_dir, const std::string& ref_dir);

ModelConfig model_from_checkpoint(const Archive& ar);

}  // namespace bnc
