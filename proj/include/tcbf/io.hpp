#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tcbf/heightfield.hpp"
#include "tcbf/model.hpp"
#include "tcbf/safety.hpp"
#include "tcbf/vehicle.hpp"

namespace tcbf::io {

using Bytes = std::vector<std::uint8_t>;

// HF1: "HF1\0", u32 cols, u32 rows, f32 resolution, f64 origin x, f64 origin y,
// rows*cols f32 heights (row-major). All little-endian.
Bytes encode_heightfield(const Heightfield& hf);
Heightfield decode_heightfield(const Bytes& bytes);

// DS1: "DS1\0", u32 count, f64 thresholds (pitch, roll, displacement, control),
// then per record: 4000 f32 o_t, 4000 f32 o_next, f64 v, f64 omega, u8 reason.
// Patch anchors are not stored.
Bytes encode_dataset(const Dataset& ds);
Dataset decode_dataset(const Bytes& bytes);

/// Provenance stored alongside trained parameters.
struct ModelMetadata {
  TrainConfig train;
  LossConfig loss;
  std::string dataset_hash;
  int best_epoch = 0;
  double val_accuracy = 0.0;
};

struct ModelFile {
  TCBFNetwork network;
  ModelMetadata metadata;
};

// NN1: one line of JSON manifest (format, version, architecture, layer names
// and shapes, training configuration, dataset hash) terminated by '\n',
// followed by every parameter as little-endian f64 in manifest order.
Bytes encode_model(const TCBFNetwork& net, const ModelMetadata& meta);
ModelFile decode_model(const Bytes& bytes);

/// FNV-1a over the DS1 encoding, as 16 hex digits.
std::string dataset_hash(const Dataset& ds);

/// Columns t,x,y,z,roll,pitch,yaw,v,omega,immobilized. Row i carries the
/// control applied at state i (zero on the final row).
std::string trajectory_csv(const Trajectory& traj);
Trajectory parse_trajectory_csv(const std::string& text, double dt);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

inline Heightfield load_heightfield(const std::filesystem::path& p) { return decode_heightfield(read_file(p)); }
inline void save_heightfield(const std::filesystem::path& p, const Heightfield& hf) {
  write_file(p, encode_heightfield(hf));
}
inline Dataset load_dataset(const std::filesystem::path& p) { return decode_dataset(read_file(p)); }
inline void save_dataset(const std::filesystem::path& p, const Dataset& ds) { write_file(p, encode_dataset(ds)); }
inline ModelFile load_model(const std::filesystem::path& p) { return decode_model(read_file(p)); }
inline void save_model(const std::filesystem::path& p, const TCBFNetwork& net, const ModelMetadata& meta) {
  write_file(p, encode_model(net, meta));
}

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace tcbf::io
