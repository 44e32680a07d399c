#pragma once

// On-disk formats. Binary files are little-endian with a four-byte magic and
// a u16 version; every struct here holds exactly the bytes it was read from,
// so write → read → write reproduces a file byte for byte.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffqg/closures.hpp"
#include "diffqg/coarse.hpp"
#include "diffqg/qg.hpp"

namespace diffqg::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Bytes = std::vector<std::uint8_t>;

/// Writes to a temporary sibling and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void atomic_write(const std::filesystem::path& path, const std::string& text);
Bytes read_file(const std::filesystem::path& path);

// --- field snapshot: "QGF1" ---------------------------------------------------------

struct FieldSnapshot {
  std::uint32_t n = 0;
  double time = 0.0;
  double length = 0.0;
  std::vector<double> values;  // real-space vorticity, row-major

  static FieldSnapshot from_state(const QGState& s);
  QGState to_state() const;

  friend bool operator==(const FieldSnapshot&, const FieldSnapshot&) = default;
};

Bytes encode(const FieldSnapshot& s);
FieldSnapshot decode_snapshot(std::span<const std::uint8_t> bytes);
void write_snapshot(const std::filesystem::path& path, const FieldSnapshot& s);
FieldSnapshot read_snapshot(const std::filesystem::path& path);

// --- network checkpoint: "QGNN" ------------------------------------------------------

struct Checkpoint {
  CnnParams params;
  Normalization norm;
};

Bytes encode(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// --- sample dataset: "QGDS" ------------------------------------------------------------

struct DatasetFile {
  struct Segment {
    std::string source;
    std::vector<double> t;
    std::vector<std::vector<double>> omega_bar;  // real space, per sample
    std::vector<std::vector<double>> residual;   // real space, per sample

    friend bool operator==(const Segment&, const Segment&) = default;
  };

  std::uint32_t n = 0;
  std::uint32_t delta = 0;
  double dt_sample = 0.0;
  std::vector<Segment> segments;

  static DatasetFile from_sample_sets(std::span<const SampleSet> sets, int delta);
  std::vector<SampleSet> to_sample_sets() const;
  std::size_t sample_count() const;

  friend bool operator==(const DatasetFile&, const DatasetFile&) = default;
};

Bytes encode(const DatasetFile& d);
DatasetFile decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const std::filesystem::path& path, const DatasetFile& d);
DatasetFile read_dataset(const std::filesystem::path& path);

// --- trajectory manifest (JSON) ------------------------------------------------------

struct TrajectoryManifest {
  struct Entry {
    long step = 0;
    double t = 0.0;
    std::string file;  // relative to the manifest directory

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  int n = 0;
  int cadence = 1;
  double dt = 0.0;
  std::string source;
  bool truncated = false;
  std::string diagnostic;
  std::vector<Entry> entries;  // time order

  friend bool operator==(const TrajectoryManifest&, const TrajectoryManifest&) = default;
};

std::string encode(const TrajectoryManifest& m);
TrajectoryManifest decode_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, const TrajectoryManifest& m);
TrajectoryManifest read_manifest(const std::filesystem::path& path);

// --- CSV ---------------------------------------------------------------------------------

/// Shortest text that reads back to the same double.
std::string format_double(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const;
};

CsvTable parse_csv(const std::string& text);

}  // namespace diffqg::io
