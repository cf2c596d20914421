// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_CONFIG_H_
#define DESEP_CONFIG_H_

#include <string>

#include "desep/datasim.h"
#include "desep/pipeline.h"
#include "desep/training.h"

namespace desep {

// Everything the command line needs, assembled from one config file.
struct ToolkitConfig {
  PipelineConfig pipeline;
  SimulatorConfig datasim;
  TrainConfig training;
};

ToolkitConfig default_toolkit_config();

// Line-oriented "[section]" / "key = value" format, '#' comments. Unknown
// sections or keys raise DataError with the offending line number, as do
// unparseable values. The sample rate lives under [stft] and is shared
// with the simulator; [training] beam_feature / wpe / category decide the
// pipeline wiring.
ToolkitConfig parse_config_text(const std::string& text, const std::string& origin);
ToolkitConfig parse_config_file(const std::string& path);

}  // namespace desep

#endif  // DESEP_CONFIG_H_
