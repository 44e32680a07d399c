#include "diffqg/io.hpp"

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace diffqg::io {

namespace fs = std::filesystem;

// --- files -----------------------------------------------------------------------

namespace {

fs::path temp_sibling(const fs::path& path) {
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  return tmp;
}

}  // namespace

void atomic_write(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw std::runtime_error("failed writing " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

void atomic_write(const fs::path& path, const std::string& text) {
  atomic_write(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// --- little-endian encoding ------------------------------------------------------------

namespace {

class Writer {
 public:
  void magic(const char (&m)[5]) { bytes_.insert(bytes_.end(), m, m + 4); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  Bytes take() { return std::move(bytes_); }

 private:
  template <class T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  Bytes bytes_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

  void magic(const char (&m)[5]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) fail(std::string("bad magic, expected ") + m);
    pos_ += 4;
  }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::vector<double> f64s(std::size_t count) {
    need(count * 8);
    std::vector<double> v(count);
    for (double& x : v) x = f64();
    return v;
  }
  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }
  void version(std::uint16_t expected) {
    const std::uint16_t v = u16();
    if (v != expected) fail("unsupported version " + std::to_string(v));
  }
  void finish() const {
    if (pos_ != bytes_.size()) fail(std::to_string(bytes_.size() - pos_) + " trailing bytes");
  }
  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(std::string(what_) + ": " + msg); }

 private:
  void need(std::size_t count) const {
    if (bytes_.size() - pos_ < count) fail("truncated payload");
  }
  template <class T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  const char* what_;
};

constexpr std::uint16_t kVersion = 1;

bool finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

// --- snapshot --------------------------------------------------------------------------

FieldSnapshot FieldSnapshot::from_state(const QGState& s) {
  const Grid& g = s.omega_hat.grid();
  return {static_cast<std::uint32_t>(g.n()), s.t, g.length(), to_real(s.omega_hat).data()};
}

QGState FieldSnapshot::to_state() const {
  return {to_spectral(RealField(Grid(static_cast<int>(n)), values)), time};
}

Bytes encode(const FieldSnapshot& s) {
  if (s.values.size() != static_cast<std::size_t>(s.n) * s.n) {
    throw FormatError("snapshot: payload size does not match n");
  }
  if (!finite(s.values)) throw FormatError("snapshot: non-finite vorticity");
  Writer w;
  w.magic("QGF1");
  w.u16(kVersion);
  w.u32(s.n);
  w.f64(s.time);
  w.f64(s.length);
  w.f64s(s.values);
  return w.take();
}

FieldSnapshot decode_snapshot(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "snapshot");
  r.magic("QGF1");
  r.version(kVersion);
  FieldSnapshot s;
  s.n = r.u32();
  s.time = r.f64();
  s.length = r.f64();
  s.values = r.f64s(static_cast<std::size_t>(s.n) * s.n);
  r.finish();
  if (!finite(s.values)) r.fail("non-finite vorticity");
  return s;
}

void write_snapshot(const fs::path& path, const FieldSnapshot& s) { atomic_write(path, encode(s)); }
FieldSnapshot read_snapshot(const fs::path& path) { return decode_snapshot(read_file(path)); }

// --- checkpoint --------------------------------------------------------------------------

Bytes encode(const Checkpoint& c) {
  c.params.validate();
  c.norm.validate();
  Writer w;
  w.magic("QGNN");
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(c.params.layers.size()));
  w.u32(1);
  for (const ConvLayer& l : c.params.layers) w.u32(static_cast<std::uint32_t>(l.out_channels));
  w.u32(static_cast<std::uint32_t>(c.params.layers.front().kernel));
  w.f64(c.norm.omega_scale);
  w.f64(c.norm.residual_scale);
  for (const ConvLayer& l : c.params.layers) {
    w.f64s(l.weights);
    w.f64s(l.bias);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "checkpoint");
  r.magic("QGNN");
  r.version(kVersion);
  const std::uint32_t depth = r.u32();
  if (depth == 0 || depth > 1024) r.fail("implausible depth " + std::to_string(depth));
  std::vector<std::uint32_t> channels(depth + 1);
  for (auto& c : channels) {
    c = r.u32();
    if (c == 0 || c > 4096) r.fail("implausible channel count " + std::to_string(c));
  }
  const std::uint32_t kernel = r.u32();
  if (kernel == 0 || kernel > 63) r.fail("implausible kernel size " + std::to_string(kernel));
  Checkpoint c;
  c.norm.omega_scale = r.f64();
  c.norm.residual_scale = r.f64();
  for (std::uint32_t l = 0; l < depth; ++l) {
    ConvLayer layer;
    layer.in_channels = static_cast<int>(channels[l]);
    layer.out_channels = static_cast<int>(channels[l + 1]);
    layer.kernel = static_cast<int>(kernel);
    layer.weights = r.f64s(layer.shape(0).weight_count());
    layer.bias = r.f64s(static_cast<std::size_t>(layer.out_channels));
    c.params.layers.push_back(std::move(layer));
  }
  r.finish();
  try {
    c.params.validate();
    c.norm.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  return c;
}

void write_checkpoint(const fs::path& path, const Checkpoint& c) { atomic_write(path, encode(c)); }
Checkpoint read_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

// --- dataset -----------------------------------------------------------------------------

DatasetFile DatasetFile::from_sample_sets(std::span<const SampleSet> sets, int delta) {
  DatasetFile d;
  d.delta = static_cast<std::uint32_t>(delta);
  for (const SampleSet& set : sets) {
    if (set.samples.empty()) continue;
    const auto n = static_cast<std::uint32_t>(set.samples.front().omega_bar.grid().n());
    if (d.n == 0) {
      d.n = n;
      d.dt_sample = set.dt_sample;
    } else if (n != d.n || set.dt_sample != d.dt_sample) {
      throw std::invalid_argument("dataset segments disagree on grid size or sample spacing");
    }
    Segment seg;
    seg.source = set.source_id;
    for (const Sample& s : set.samples) {
      seg.t.push_back(s.t);
      seg.omega_bar.push_back(to_real(s.omega_bar).data());
      seg.residual.push_back(to_real(s.residual).data());
    }
    d.segments.push_back(std::move(seg));
  }
  return d;
}

std::vector<SampleSet> DatasetFile::to_sample_sets() const {
  const Grid g(static_cast<int>(n));
  std::vector<SampleSet> out;
  for (const Segment& seg : segments) {
    SampleSet set;
    set.source_id = seg.source;
    set.dt_sample = dt_sample;
    for (std::size_t i = 0; i < seg.t.size(); ++i) {
      set.samples.push_back({to_spectral(RealField(g, seg.omega_bar[i])), to_spectral(RealField(g, seg.residual[i])),
                             seg.t[i]});
    }
    out.push_back(std::move(set));
  }
  return out;
}

std::size_t DatasetFile::sample_count() const {
  std::size_t c = 0;
  for (const Segment& s : segments) c += s.t.size();
  return c;
}

Bytes encode(const DatasetFile& d) {
  const std::size_t plane = static_cast<std::size_t>(d.n) * d.n;
  Writer w;
  w.magic("QGDS");
  w.u16(kVersion);
  w.u32(d.n);
  w.u32(d.delta);
  w.f64(d.dt_sample);
  w.u32(static_cast<std::uint32_t>(d.segments.size()));
  for (const auto& seg : d.segments) {
    const std::size_t count = seg.t.size();
    if (seg.omega_bar.size() != count || seg.residual.size() != count) {
      throw FormatError("dataset: segment arrays have different lengths");
    }
    w.str(seg.source);
    w.u32(static_cast<std::uint32_t>(count));
    for (std::size_t i = 0; i < count; ++i) {
      if (seg.omega_bar[i].size() != plane || seg.residual[i].size() != plane) {
        throw FormatError("dataset: field size does not match n");
      }
      w.f64(seg.t[i]);
      w.f64s(seg.omega_bar[i]);
      w.f64s(seg.residual[i]);
    }
  }
  return w.take();
}

DatasetFile decode_dataset(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "dataset");
  r.magic("QGDS");
  r.version(kVersion);
  DatasetFile d;
  d.n = r.u32();
  d.delta = r.u32();
  d.dt_sample = r.f64();
  const std::uint32_t segments = r.u32();
  const std::size_t plane = static_cast<std::size_t>(d.n) * d.n;
  for (std::uint32_t s = 0; s < segments; ++s) {
    DatasetFile::Segment seg;
    seg.source = r.str();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      seg.t.push_back(r.f64());
      seg.omega_bar.push_back(r.f64s(plane));
      seg.residual.push_back(r.f64s(plane));
    }
    d.segments.push_back(std::move(seg));
  }
  r.finish();
  return d;
}

void write_dataset(const fs::path& path, const DatasetFile& d) { atomic_write(path, encode(d)); }
DatasetFile read_dataset(const fs::path& path) { return decode_dataset(read_file(path)); }

// --- manifest ----------------------------------------------------------------------------

std::string encode(const TrajectoryManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "diffqg-trajectory";
  j["version"] = kVersion;
  j["n"] = m.n;
  j["cadence"] = m.cadence;
  j["dt"] = m.dt;
  j["source"] = m.source;
  j["truncated"] = m.truncated;
  j["diagnostic"] = m.diagnostic;
  auto& entries = j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    nlohmann::ordered_json je;
    je["step"] = e.step;
    je["t"] = e.t;
    je["file"] = e.file;
    entries.push_back(std::move(je));
  }
  return j.dump(2) + "\n";
}

TrajectoryManifest decode_manifest(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "diffqg-trajectory") throw FormatError("manifest: unknown format");
    if (j.at("version").get<int>() != kVersion) throw FormatError("manifest: unsupported version");
    TrajectoryManifest m;
    m.n = j.at("n").get<int>();
    m.cadence = j.at("cadence").get<int>();
    m.dt = j.at("dt").get<double>();
    m.source = j.at("source").get<std::string>();
    m.truncated = j.at("truncated").get<bool>();
    m.diagnostic = j.at("diagnostic").get<std::string>();
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("step").get<long>(), e.at("t").get<double>(), e.at("file").get<std::string>()});
    }
    for (std::size_t i = 1; i < m.entries.size(); ++i) {
      if (!(m.entries[i].step > m.entries[i - 1].step)) throw FormatError("manifest: entries are not in time order");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

void write_manifest(const fs::path& path, const TrajectoryManifest& m) { atomic_write(path, encode(m)); }

TrajectoryManifest read_manifest(const fs::path& path) {
  const Bytes b = read_file(path);
  return decode_manifest(std::string(b.begin(), b.end()));
}

// --- CSV -----------------------------------------------------------------------------------

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string CsvTable::str() const {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

}  // namespace diffqg::io
