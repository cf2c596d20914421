// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_DUMP_H_
#define DESEP_DUMP_H_

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "desep/stft.h"

namespace desep {

// On-disk layout: one text header line of exactly eight whitespace-
// separated fields,
//   DSEPFEAT <items> <rows> <cols> <hop> <fft_size> <rate> <complex|real>
// then raw little-endian float32 data ordered [item][row][col], complex
// cells interleaved (re, im).
struct FeatureDumpHeader {
  int items = 0;
  int rows = 0;
  int cols = 0;
  int hop = 0;
  int fft_size = 0;
  int rate = 0;
  bool is_complex = false;
};

void write_complex_dump(const std::string& path,
                        const std::vector<Eigen::MatrixXcd>& items,
                        const StftConfig& config);
void write_real_dump(const std::string& path, const std::vector<Eigen::MatrixXd>& items,
                     const StftConfig& config);

FeatureDumpHeader read_dump_header(const std::string& path);
std::vector<Eigen::MatrixXcd> read_complex_dump(const std::string& path,
                                                FeatureDumpHeader* header = nullptr);
std::vector<Eigen::MatrixXd> read_real_dump(const std::string& path,
                                            FeatureDumpHeader* header = nullptr);

}  // namespace desep

#endif  // DESEP_DUMP_H_
