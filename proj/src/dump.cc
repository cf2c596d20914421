// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/dump.h"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "desep/common.h"

namespace desep {

namespace {

void write_header(std::ofstream& out, int items, int rows, int cols,
                  const StftConfig& config, bool is_complex) {
  out << "DSEPFEAT " << items << " " << rows << " " << cols << " " << config.hop_size
      << " " << config.fft_size << " " << config.sample_rate << " "
      << (is_complex ? "complex" : "real") << "\n";
}

void put_f32(std::ofstream& out, double v) {
  const float f = static_cast<float>(v);
  out.write(reinterpret_cast<const char*>(&f), sizeof(float));
}

float get_f32(std::ifstream& in, const std::string& path) {
  float f = 0.0f;
  if (!in.read(reinterpret_cast<char*>(&f), sizeof(float)))
    throw DataError("feature dump truncated: " + path);
  return f;
}

FeatureDumpHeader parse_header(std::ifstream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty feature dump: " + path);
  std::istringstream ls(line);
  std::string magic, kind;
  FeatureDumpHeader h;
  if (!(ls >> magic >> h.items >> h.rows >> h.cols >> h.hop >> h.fft_size >> h.rate >>
        kind) ||
      magic != "DSEPFEAT" || (kind != "complex" && kind != "real"))
    throw DataError("bad feature dump header in " + path + ": '" + line + "'");
  std::string extra;
  if (ls >> extra) throw DataError("feature dump header has trailing fields: " + path);
  if (h.items < 1 || h.rows < 1 || h.cols < 1)
    throw DataError("feature dump header has non-positive sizes: " + path);
  h.is_complex = kind == "complex";
  return h;
}

}  // namespace

void write_complex_dump(const std::string& path,
                        const std::vector<Eigen::MatrixXcd>& items,
                        const StftConfig& config) {
  if (items.empty()) throw std::invalid_argument("feature dump: nothing to write");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature dump: " + path);
  const int rows = static_cast<int>(items[0].rows());
  const int cols = static_cast<int>(items[0].cols());
  write_header(out, static_cast<int>(items.size()), rows, cols, config, true);
  for (const Eigen::MatrixXcd& m : items) {
    if (m.rows() != rows || m.cols() != cols)
      throw std::invalid_argument("feature dump: item shapes differ");
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        put_f32(out, m(r, c).real());
        put_f32(out, m(r, c).imag());
      }
  }
  if (!out) throw DataError("failed writing feature dump: " + path);
}

void write_real_dump(const std::string& path, const std::vector<Eigen::MatrixXd>& items,
                     const StftConfig& config) {
  if (items.empty()) throw std::invalid_argument("feature dump: nothing to write");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature dump: " + path);
  const int rows = static_cast<int>(items[0].rows());
  const int cols = static_cast<int>(items[0].cols());
  write_header(out, static_cast<int>(items.size()), rows, cols, config, false);
  for (const Eigen::MatrixXd& m : items) {
    if (m.rows() != rows || m.cols() != cols)
      throw std::invalid_argument("feature dump: item shapes differ");
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) put_f32(out, m(r, c));
  }
  if (!out) throw DataError("failed writing feature dump: " + path);
}

FeatureDumpHeader read_dump_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature dump: " + path);
  return parse_header(in, path);
}

std::vector<Eigen::MatrixXcd> read_complex_dump(const std::string& path,
                                                FeatureDumpHeader* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature dump: " + path);
  const FeatureDumpHeader h = parse_header(in, path);
  if (!h.is_complex) throw DataError("expected a complex feature dump: " + path);
  if (header) *header = h;
  std::vector<Eigen::MatrixXcd> items;
  for (int i = 0; i < h.items; ++i) {
    Eigen::MatrixXcd m(h.rows, h.cols);
    for (int r = 0; r < h.rows; ++r)
      for (int c = 0; c < h.cols; ++c) {
        const double re = get_f32(in, path);
        const double im = get_f32(in, path);
        m(r, c) = std::complex<double>(re, im);
      }
    items.push_back(std::move(m));
  }
  return items;
}

std::vector<Eigen::MatrixXd> read_real_dump(const std::string& path,
                                            FeatureDumpHeader* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature dump: " + path);
  const FeatureDumpHeader h = parse_header(in, path);
  if (h.is_complex) throw DataError("expected a real feature dump: " + path);
  if (header) *header = h;
  std::vector<Eigen::MatrixXd> items;
  for (int i = 0; i < h.items; ++i) {
    Eigen::MatrixXd m(h.rows, h.cols);
    for (int r = 0; r < h.rows; ++r)
      for (int c = 0; c < h.cols; ++c) m(r, c) = get_f32(in, path);
    items.push_back(std::move(m));
  }
  return items;
}

}  // namespace desep
