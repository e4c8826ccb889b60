// SPDX-License-Identifier: Apache-2.0
#include "csed/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "csed/errors.hpp"

namespace csed {
namespace {

constexpr char kMagic[4] = {'C', 'S', 'E', 'D'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded pieces.
  while (n > 0) {
    const auto piece = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, piece);
    data += piece;
    n -= piece;
  }
  return static_cast<std::uint32_t>(crc);
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw CheckpointTruncatedError("checkpoint record runs past end of data");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

Tensor bytes_record(const std::string& text) {
  Tensor t({text.size()});
  for (std::size_t i = 0; i < text.size(); ++i) t[i] = static_cast<unsigned char>(text[i]);
  return t;
}

std::string record_text(const Tensor& t) {
  std::string s(t.size(), '\0');
  for (std::size_t i = 0; i < t.size(); ++i) s[i] = static_cast<char>(static_cast<unsigned char>(t[i]));
  return s;
}

}  // namespace

std::vector<std::uint8_t> encode_records(const TensorRecords& records, std::uint32_t version) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, version);
  for (const auto& [name, t] : records) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_f64(out, v);
  }
  put_u32(out, crc32_of(out.data(), out.size()));
  return out;
}

TensorRecords decode_records(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw CheckpointTruncatedError("checkpoint shorter than its fixed header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (crc32_of(bytes.data(), body) != stored) {
    throw CheckpointChecksumError("checkpoint checksum mismatch (corrupted or truncated file)");
  }
  Reader in(bytes, body);
  in.str(4);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version) +
                                 " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  TensorRecords records;
  while (!in.done()) {
    std::string name = in.str(in.u32());
    Shape shape(in.u32());
    for (auto& d : shape) d = in.u32();
    Tensor t(shape);
    for (double& v : t.data()) v = in.f64();
    records.emplace_back(std::move(name), std::move(t));
  }
  return records;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const Model& m = ckpt.model;
  nlohmann::json meta = {{"model", m.spec().to_json()},
                         {"best_epoch", ckpt.best_epoch},
                         {"threshold_source", ckpt.threshold_source},
                         {"config", ckpt.config}};
  TensorRecords records;
  records.emplace_back("meta.json", bytes_record(meta.dump()));
  for (const auto& [name, t] : m.params().params()) records.emplace_back("param." + name, t);
  for (std::size_t i = 0; i < m.buffers().size(); ++i) {
    const std::string p = "buffer.fx.block" + std::to_string(i) + ".bn.";
    records.emplace_back(p + "running_mean", m.buffers()[i].running_mean);
    records.emplace_back(p + "running_var", m.buffers()[i].running_var);
  }
  const auto& norm = m.normalizer();
  records.emplace_back("norm.mean", Tensor({norm.mean.size()}, norm.mean));
  records.emplace_back("norm.std", Tensor({norm.stddev.size()}, norm.stddev));
  if (ckpt.thresholds) {
    records.emplace_back("thresholds", Tensor({ckpt.thresholds->size()}, ckpt.thresholds->values()));
  }
  return encode_records(records, kCheckpointVersion);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  const TensorRecords records = decode_records(bytes);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : records) by_name[name] = &t;
  auto require = [&](const std::string& name) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks record '" + name + "'");
    return *it->second;
  };
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(record_text(require("meta.json")));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata unreadable: ") + e.what());
  }
  ModelSpec spec = ModelSpec::from_json(meta.at("model"));
  ParamStore params;
  for (const auto& [name, t] : records) {
    if (name.rfind("param.", 0) == 0) params.add(name.substr(6), t);
  }
  ExtractorBuffers buffers;
  for (std::size_t i = 0; i < spec.extractor.blocks.size(); ++i) {
    const std::string p = "buffer.fx.block" + std::to_string(i) + ".bn.";
    buffers.push_back({require(p + "running_mean"), require(p + "running_var")});
  }
  Standardizer norm{require("norm.mean").values(), require("norm.std").values()};
  Checkpoint ckpt{Model(std::move(spec), std::move(norm), std::move(params), std::move(buffers)),
                  std::nullopt, meta.value("threshold_source", std::string{}),
                  meta.value("best_epoch", -1), meta.value("config", nlohmann::json::object())};
  if (by_name.count("thresholds")) ckpt.thresholds = ThresholdVector(require("thresholds").values());
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace csed
