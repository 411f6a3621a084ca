// File formats shared across the toolkit:
//   - binary PPM (P6) images, the only image codec needed
//   - density dumps: binary, magic "ILCD", f32 payload
//   - mask archives: text, magic "ILCM", run-length encoded binary masks
//   - prediction dumps, point files, generic delimited text
//
// All readers validate structure and fail with the offending path (and line
// number where applicable) in the message.
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "ilc/core.hpp"

namespace ilc::io {

// Fixed-format double used in all text outputs so that identical values
// always serialize to identical bytes.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

// ---- PPM (P6) -----------------------------------------------------------------

// Writes a 3xHxW tensor with values in [0,1] (clamped) as binary PPM.
inline void write_ppm(const std::string& path, const Tensor3& img) {
  check(img.c == 3, "write_ppm: image must have 3 channels");
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(path, "cannot open for writing");
  os << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(img.w) * 3);
  for (int i = 0; i < img.h; ++i) {
    for (int j = 0; j < img.w; ++j)
      for (int c = 0; c < 3; ++c) {
        double v = img.at(c, i, j);
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        row[static_cast<size_t>(j) * 3 + c] =
            static_cast<uint8_t>(std::lround(v * 255.0));
      }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
  if (!os) fail(path, "write failed");
}

namespace detail {
// PPM header token: skips whitespace and '#' comments.
inline std::string ppm_token(std::istream& is, const std::string& path) {
  std::string tok;
  int ch = is.get();
  while (is) {
    if (ch == '#') {
      while (is && ch != '\n') ch = is.get();
    } else if (std::isspace(ch)) {
      ch = is.get();
    } else {
      break;
    }
  }
  while (is && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = is.get();
  }
  if (tok.empty()) fail(path, "truncated PPM header");
  return tok;
}
}  // namespace detail

inline Tensor3 read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path, "cannot open");
  if (detail::ppm_token(is, path) != "P6") fail(path, "not a binary PPM (P6)");
  const int w = std::stoi(detail::ppm_token(is, path));
  const int h = std::stoi(detail::ppm_token(is, path));
  const int maxval = std::stoi(detail::ppm_token(is, path));
  if (w < 1 || h < 1) fail(path, "bad PPM dimensions");
  if (maxval != 255) fail(path, "unsupported PPM maxval (expected 255)");
  // The token reader consumed the single whitespace byte after maxval.
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (!is) fail(path, "truncated PPM payload");
  Tensor3 img(3, h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c)
        img.at(c, i, j) =
            raw[(static_cast<size_t>(i) * w + j) * 3 + c] / 255.0;
  return img;
}

// ---- density dumps --------------------------------------------------------------
//
// Layout: magic "ILCD" | u32 version | u32 C | u32 H | u32 W | C*H*W f32
// (row-major per category). Values are narrowed to 32-bit floats: a dump
// written from an imported dump reproduces the file byte for byte.

constexpr uint32_t kDensityDumpVersion = 1;

inline void write_density(const std::string& path, const Tensor3& maps) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(path, "cannot open for writing");
  os.write("ILCD", 4);
  const uint32_t hdr[4] = {kDensityDumpVersion, static_cast<uint32_t>(maps.c),
                           static_cast<uint32_t>(maps.h),
                           static_cast<uint32_t>(maps.w)};
  os.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  std::vector<float> payload(maps.v.size());
  for (size_t i = 0; i < maps.v.size(); ++i)
    payload[i] = static_cast<float>(maps.v[i]);
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!os) fail(path, "write failed");
}

inline Tensor3 read_density(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path, "cannot open");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "ILCD", 4) != 0) fail(path, "bad magic");
  uint32_t hdr[4];
  is.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (!is) fail(path, "truncated header");
  if (hdr[0] != kDensityDumpVersion)
    fail(path, "unsupported dump version " + std::to_string(hdr[0]) +
                   " (expected " + std::to_string(kDensityDumpVersion) + ")");
  if (hdr[1] < 1 || hdr[2] < 1 || hdr[3] < 1) fail(path, "bad dimensions");
  Tensor3 maps(static_cast<int>(hdr[1]), static_cast<int>(hdr[2]),
               static_cast<int>(hdr[3]));
  std::vector<float> payload(maps.v.size());
  is.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!is) fail(path, "truncated payload");
  for (size_t i = 0; i < payload.size(); ++i)
    maps.v[i] = static_cast<double>(payload[i]);
  return maps;
}

// ---- mask archives ----------------------------------------------------------------
//
// Text format. First line "ILCM 1". Each record is two lines:
//   image_id category instance score H W n_runs
//   r0 r1 ... r{n-1}
// Runs encode the row-major flattened mask, alternating and starting with the
// zero symbol; run values are non-negative and sum to H*W. category -1 marks
// an unassigned mask (e.g. class-agnostic proposals).

struct MaskRecord {
  std::string image_id;
  int category = -1;
  int instance = 0;
  double score = 1.0;
  Grid mask;
};

inline std::vector<long long> rle_encode(const Grid& mask) {
  std::vector<long long> runs;
  int cur = 0;
  long long run = 0;
  for (double v : mask.v) {
    check(v == 0.0 || v == 1.0, "rle_encode: mask must be 0/1 valued");
    const int b = v != 0.0 ? 1 : 0;
    if (b == cur) {
      ++run;
    } else {
      runs.push_back(run);
      run = 1;
      cur = b;
    }
  }
  runs.push_back(run);
  return runs;
}

inline Grid rle_decode(int h, int w, const std::vector<long long>& runs) {
  Grid mask(h, w);
  size_t pos = 0;
  int bit = 0;
  long long total = 0;
  for (long long r : runs) {
    check(r >= 0, "rle_decode: negative run");
    total += r;
    check(total <= static_cast<long long>(mask.size()),
          "rle_decode: runs exceed mask size");
    for (long long k = 0; k < r; ++k) mask.v[pos++] = bit;
    bit ^= 1;
  }
  check(total == static_cast<long long>(mask.size()),
        "rle_decode: runs do not cover mask");
  return mask;
}

inline void write_mask_archive(const std::string& path,
                               const std::vector<MaskRecord>& records) {
  std::ofstream os(path);
  if (!os) fail(path, "cannot open for writing");
  os << "ILCM 1\n";
  for (const auto& r : records) {
    check(!r.image_id.empty() &&
              r.image_id.find_first_of(" \t\n") == std::string::npos,
          "mask archive: image_id must be a single token");
    const auto runs = rle_encode(r.mask);
    os << r.image_id << " " << r.category << " " << r.instance << " "
       << format_double(r.score) << " " << r.mask.h << " " << r.mask.w << " "
       << runs.size() << "\n";
    for (size_t i = 0; i < runs.size(); ++i)
      os << runs[i] << (i + 1 == runs.size() ? "\n" : " ");
  }
  if (!os) fail(path, "write failed");
}

inline std::vector<MaskRecord> read_mask_archive(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(path, "cannot open");
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "ILCM") fail(path, "bad magic");
  if (version != 1) fail(path, "unsupported archive version");
  std::vector<MaskRecord> records;
  MaskRecord r;
  while (is >> r.image_id) {
    int h = 0, w = 0;
    size_t n_runs = 0;
    if (!(is >> r.category >> r.instance >> r.score >> h >> w >> n_runs))
      fail(path, "truncated record header (record " +
                     std::to_string(records.size()) + ")");
    if (h < 1 || w < 1) fail(path, "bad mask dimensions");
    std::vector<long long> runs(n_runs);
    for (auto& run : runs)
      if (!(is >> run))
        fail(path, "truncated run list (record " +
                       std::to_string(records.size()) + ")");
    try {
      r.mask = rle_decode(h, w, runs);
    } catch (const std::exception& e) {
      fail(path, std::string(e.what()) + " (record " +
                     std::to_string(records.size()) + ")");
    }
    records.push_back(r);
  }
  return records;
}

// ---- prediction dumps ----------------------------------------------------------
//
// One line per (image, category): image_id category score raw_sum count.

struct PredictionRecord {
  std::string image_id;
  int category = 0;
  double score = 0.0;
  double raw_sum = 0.0;
  int count = 0;
};

inline void write_predictions(const std::string& path,
                              const std::vector<PredictionRecord>& records) {
  std::ofstream os(path);
  if (!os) fail(path, "cannot open for writing");
  for (const auto& r : records)
    os << r.image_id << " " << r.category << " " << format_double(r.score)
       << " " << format_double(r.raw_sum) << " " << r.count << "\n";
  if (!os) fail(path, "write failed");
}

inline std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(path, "cannot open");
  std::vector<PredictionRecord> records;
  PredictionRecord r;
  while (is >> r.image_id) {
    if (!(is >> r.category >> r.score >> r.raw_sum >> r.count))
      fail(path, "malformed prediction record at line " +
                     std::to_string(records.size() + 1));
    records.push_back(r);
  }
  return records;
}

// ---- point files ------------------------------------------------------------------
//
// One line per instance center: image_id category row col (image-pixel
// coordinates; fractional values allowed).

struct PointRecord {
  std::string image_id;
  int category = 0;
  double row = 0.0;
  double col = 0.0;
};

inline void write_points(const std::string& path,
                         const std::vector<PointRecord>& records) {
  std::ofstream os(path);
  if (!os) fail(path, "cannot open for writing");
  for (const auto& r : records)
    os << r.image_id << " " << r.category << " " << format_double(r.row) << " "
       << format_double(r.col) << "\n";
  if (!os) fail(path, "write failed");
}

inline std::vector<PointRecord> read_points(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(path, "cannot open");
  std::vector<PointRecord> records;
  PointRecord r;
  while (is >> r.image_id) {
    if (!(is >> r.category >> r.row >> r.col))
      fail(path, "malformed point record at line " +
                     std::to_string(records.size() + 1));
    records.push_back(r);
  }
  return records;
}

// ---- small text helpers -----------------------------------------------------------

inline std::vector<std::string> split_tokens(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> toks;
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(path, "cannot open");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) fail(path, "cannot open for writing");
  os << content;
  if (!os) fail(path, "write failed");
}

inline std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path, "cannot open");
  std::string out((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  return out;
}

}  // namespace ilc::io
