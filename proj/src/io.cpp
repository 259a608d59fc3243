#include "tcbf/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "tcbf/errors.hpp"

namespace tcbf::io {

namespace {

using nlohmann::json;

constexpr std::uint8_t kHeightfieldMagic[4] = {'H', 'F', '1', '\0'};
constexpr std::uint8_t kDatasetMagic[4] = {'D', 'S', '1', '\0'};
constexpr int kModelVersion = 1;

class Writer {
 public:
  void bytes(const std::uint8_t* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(std::uint8_t(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(std::uint8_t(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  Reader(const Bytes& data, const char* what) : data_(data), what_(what) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void expect_magic(const std::uint8_t (&magic)[4]) {
    need(4);
    if (std::memcmp(data_.data() + pos_, magic, 4) != 0) {
      throw FormatError(std::string(what_) + ": bad magic at offset 0");
    }
    pos_ += 4;
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(data_[pos_ + std::size_t(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(data_[pos_ + std::size_t(i)]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

  void need(std::size_t n) const {
    if (remaining() < n) {
      throw FormatError(std::string(what_) + ": truncated at offset " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + " bytes, have " + std::to_string(remaining()) + ")");
    }
  }
  void expect_end() const {
    if (remaining() != 0) {
      throw FormatError(std::string(what_) + ": " + std::to_string(remaining()) + " trailing bytes at offset " +
                        std::to_string(pos_));
    }
  }

 private:
  const Bytes& data_;
  const char* what_;
  std::size_t pos_ = 0;
};

json shape_to_json(const NetworkShape& s) {
  return json{{"patch_rows", s.patch_rows}, {"patch_cols", s.patch_cols}, {"conv_channels", s.conv_channels},
              {"kernel", s.kernel},         {"stride", s.stride},         {"hidden", s.hidden},
              {"encoder_hidden", s.encoder_hidden}, {"input_scale", s.input_scale}};
}

NetworkShape shape_from_json(const json& j) {
  NetworkShape s;
  s.patch_rows = j.at("patch_rows").get<int>();
  s.patch_cols = j.at("patch_cols").get<int>();
  s.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  s.kernel = j.at("kernel").get<int>();
  s.stride = j.at("stride").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.encoder_hidden = j.at("encoder_hidden").get<int>();
  s.input_scale = j.at("input_scale").get<double>();
  return s;
}

}  // namespace

Bytes encode_heightfield(const Heightfield& hf) {
  Writer w;
  w.bytes(kHeightfieldMagic, 4);
  w.u32(hf.cols());
  w.u32(hf.rows());
  w.f32(hf.resolution());
  w.f64(hf.origin().x);
  w.f64(hf.origin().y);
  for (float h : hf.heights()) w.f32(h);
  return w.take();
}

Heightfield decode_heightfield(const Bytes& bytes) {
  Reader r(bytes, "HF1");
  r.expect_magic(kHeightfieldMagic);
  const std::uint32_t cols = r.u32();
  const std::uint32_t rows = r.u32();
  const float res = r.f32();
  Point2 origin;
  origin.x = r.f64();
  origin.y = r.f64();
  const std::uint64_t n = std::uint64_t(cols) * rows;
  r.need(std::size_t(n * 4));
  std::vector<float> heights(n);
  for (auto& h : heights) h = r.f32();
  r.expect_end();
  try {
    return Heightfield(cols, rows, res, origin, std::move(heights));
  } catch (const ValidationError& e) {
    throw FormatError(std::string("HF1: invalid contents: ") + e.what());
  }
}

Bytes encode_dataset(const Dataset& ds) {
  Writer w;
  w.bytes(kDatasetMagic, 4);
  w.u32(std::uint32_t(ds.samples.size()));
  w.f64(ds.thresholds.pitch);
  w.f64(ds.thresholds.roll);
  w.f64(ds.thresholds.displacement);
  w.f64(ds.thresholds.control);
  for (const auto& s : ds.samples) {
    if (s.o_t.values.size() != std::size_t(kPatchSize) || s.o_next.values.size() != std::size_t(kPatchSize)) {
      throw ValidationError("DS1 records require 100x40 patches");
    }
    for (float v : s.o_t.values) w.f32(v);
    for (float v : s.o_next.values) w.f32(v);
    w.f64(s.u.v);
    w.f64(s.u.omega);
    w.u8(std::uint8_t(s.label.reason));
  }
  return w.take();
}

Dataset decode_dataset(const Bytes& bytes) {
  Reader r(bytes, "DS1");
  r.expect_magic(kDatasetMagic);
  Dataset ds;
  const std::uint32_t count = r.u32();
  ds.thresholds.pitch = r.f64();
  ds.thresholds.roll = r.f64();
  ds.thresholds.displacement = r.f64();
  ds.thresholds.control = r.f64();
  constexpr std::size_t kRecord = 2 * kPatchSize * 4 + 16 + 1;
  r.need(std::size_t(count) * kRecord);
  ds.samples.resize(count);
  for (auto& s : ds.samples) {
    for (auto& v : s.o_t.values) v = r.f32();
    for (auto& v : s.o_next.values) v = r.f32();
    s.u.v = r.f64();
    s.u.omega = r.f64();
    const std::size_t at = r.offset();
    const std::uint8_t code = r.u8();
    if (code > std::uint8_t(UnsafeReason::immobilized)) {
      throw FormatError("DS1: invalid label code " + std::to_string(code) + " at offset " + std::to_string(at));
    }
    s.label.reason = UnsafeReason(code);
  }
  r.expect_end();
  return ds;
}

Bytes encode_model(const TCBFNetwork& net, const ModelMetadata& meta) {
  json layers = json::array();
  for (const auto& p : net.parameters()) layers.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  const json manifest = {
      {"format", "NN1"},
      {"version", kModelVersion},
      {"architecture", shape_to_json(net.shape())},
      {"layers", layers},
      {"training",
       {{"epochs", meta.train.epochs},
        {"batch_size", meta.train.batch_size},
        {"learning_rate", meta.train.learning_rate},
        {"seed", meta.train.seed},
        {"best_epoch", meta.best_epoch},
        {"val_accuracy", meta.val_accuracy}}},
      {"loss",
       {{"c1", meta.loss.c1},
        {"c2", meta.loss.c2},
        {"c3", meta.loss.c3},
        {"eps1", meta.loss.eps1},
        {"eps2", meta.loss.eps2},
        {"eps3", meta.loss.eps3},
        {"alpha_gamma", meta.loss.alpha_gamma}}},
      {"dataset_hash", meta.dataset_hash},
  };
  const std::string text = manifest.dump() + "\n";
  Writer w;
  w.bytes(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  for (const auto& p : net.parameters()) {
    for (double v : p.tensor.data()) w.f64(v);
  }
  return w.take();
}

ModelFile decode_model(const Bytes& bytes) {
  if (bytes.empty() || bytes[0] != '{') throw FormatError("NN1: bad magic at offset 0 (expected JSON manifest)");
  const auto newline = std::find(bytes.begin(), bytes.end(), std::uint8_t('\n'));
  if (newline == bytes.end()) throw FormatError("NN1: truncated manifest at offset " + std::to_string(bytes.size()));
  const std::size_t header = std::size_t(newline - bytes.begin()) + 1;

  json manifest;
  try {
    manifest = json::parse(bytes.begin(), newline);
  } catch (const json::exception& e) {
    throw FormatError(std::string("NN1: unreadable manifest at offset 0: ") + e.what());
  }
  try {
    if (manifest.at("format") != "NN1") throw FormatError("NN1: manifest format is not NN1");
    if (manifest.at("version") != kModelVersion) {
      throw FormatError("NN1: unsupported version " + manifest.at("version").dump());
    }
    ModelFile out{TCBFNetwork(shape_from_json(manifest.at("architecture"))), {}};
    const auto& layers = manifest.at("layers");
    auto& params = out.network.parameters();
    if (layers.size() != params.size()) throw FormatError("NN1: layer list does not match architecture");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (layers[i].at("name") != params[i].name ||
          layers[i].at("shape").get<ad::Shape>() != params[i].tensor.shape()) {
        throw FormatError("NN1: layer " + std::to_string(i) + " does not match architecture");
      }
    }
    const auto& t = manifest.at("training");
    out.metadata.train.epochs = t.at("epochs").get<int>();
    out.metadata.train.batch_size = t.at("batch_size").get<std::size_t>();
    out.metadata.train.learning_rate = t.at("learning_rate").get<double>();
    out.metadata.train.seed = t.at("seed").get<std::uint64_t>();
    out.metadata.best_epoch = t.at("best_epoch").get<int>();
    out.metadata.val_accuracy = t.at("val_accuracy").get<double>();
    const auto& l = manifest.at("loss");
    out.metadata.loss = {l.at("c1").get<double>(),   l.at("c2").get<double>(),   l.at("c3").get<double>(),
                         l.at("eps1").get<double>(), l.at("eps2").get<double>(), l.at("eps3").get<double>(),
                         l.at("alpha_gamma").get<double>()};
    out.metadata.dataset_hash = manifest.at("dataset_hash").get<std::string>();

    Reader r(bytes, "NN1");
    r.skip(header);
    for (auto& p : params) {
      for (double& v : p.tensor.mutable_data()) v = r.f64();
    }
    r.expect_end();
    return out;
  } catch (const json::exception& e) {
    throw FormatError(std::string("NN1: malformed manifest: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(std::string("NN1: invalid architecture: ") + e.what());
  }
}

std::string dataset_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : encode_dataset(ds)) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("not a number: '" + s + "'");
  }
  return v;
}

std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "t,x,y,z,roll,pitch,yaw,v,omega,immobilized\n";
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    const RobotState& s = traj.states[i];
    const Control u = i < traj.controls.size() ? traj.controls[i] : Control{};
    const bool last = i + 1 == traj.states.size();
    const double fields[] = {double(i) * traj.dt, s.x, s.y, s.z, s.roll, s.pitch, s.yaw, u.v, u.omega};
    for (double f : fields) out += format_double(f) + ",";
    out += (last && traj.immobilized) ? "1\n" : "0\n";
  }
  return out;
}

Trajectory parse_trajectory_csv(const std::string& text, double dt) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "t,x,y,z,roll,pitch,yaw,v,omega,immobilized") {
    throw FormatError("trajectory CSV: unexpected header at offset 0");
  }
  Trajectory traj;
  traj.dt = dt;
  std::vector<Control> controls;
  std::size_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) {
      throw FormatError("trajectory CSV: expected 10 columns at offset " + std::to_string(offset));
    }
    RobotState s{parse_double(cells[1]), parse_double(cells[2]), parse_double(cells[3]),
                 parse_double(cells[4]), parse_double(cells[5]), parse_double(cells[6])};
    traj.states.push_back(s);
    controls.push_back({parse_double(cells[7]), parse_double(cells[8])});
    traj.immobilized = cells[9] == "1";
    offset += line.size() + 1;
  }
  if (traj.states.empty()) throw FormatError("trajectory CSV: no rows");
  controls.pop_back();
  traj.controls = std::move(controls);
  return traj;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, Bytes(text.begin(), text.end()));
}

}  // namespace tcbf::io
