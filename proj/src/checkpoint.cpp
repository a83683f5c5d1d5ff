#include "biasly/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "biasly/error.hpp"

namespace biasly::model {
namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { little_endian(v, 4); }
  void u64(std::uint64_t v) { little_endian(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) { bytes(s.data(), s.size()); }
  std::string take() { return std::move(out_); }

 private:
  void little_endian(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw SchemaError("checkpoint: truncated file");
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t little_endian(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += width;
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(little_endian(4)); }
  std::uint64_t u64() { return little_endian(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(const Model& model, std::vector<std::string> vocab,
                           nlohmann::json meta) {
  if (vocab.size() != model.config().vocab_size) {
    throw InvalidArgument("checkpoint: vocabulary has " + std::to_string(vocab.size()) +
                          " entries but the model expects " +
                          std::to_string(model.config().vocab_size));
  }
  Checkpoint c;
  c.config = model.config();
  c.vocab = std::move(vocab);
  c.meta = std::move(meta);
  for (const NamedParam& p : model.named_parameters()) c.params.push_back({p.name, p.tensor.detach()});
  return c;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  const std::string header =
      nlohmann::json{{"model", ckpt.config}, {"vocab", ckpt.vocab}, {"meta", ckpt.meta}}.dump();
  w.u64(header.size());
  w.str(header);
  w.u64(ckpt.params.size());
  for (const NamedParam& p : ckpt.params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) w.u64(d);
    for (double v : p.tensor.data()) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw SchemaError("checkpoint: bad magic bytes");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw SchemaError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::uint64_t header_len = r.u64();
  r.need(header_len);
  Checkpoint c;
  try {
    const nlohmann::json header = nlohmann::json::parse(r.raw(header_len));
    header.at("model").get_to(c.config);
    header.at("vocab").get_to(c.vocab);
    c.meta = header.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint: malformed header: ") + e.what());
  }
  const std::uint64_t n_params = r.u64();
  for (std::uint64_t i = 0; i < n_params; ++i) {
    NamedParam p;
    p.name = r.raw(r.u32());
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    const std::size_t n = shape_size(shape);
    r.need(n * 8);
    std::vector<double> values(n);
    for (double& v : values) v = r.f64();
    p.tensor = Tensor(std::move(shape), std::move(values));
    c.params.push_back(std::move(p));
  }
  if (!r.done()) throw SchemaError("checkpoint: trailing bytes after last parameter");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  const std::string bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

Model restore_model(const Checkpoint& ckpt) {
  if (ckpt.vocab.size() != ckpt.config.vocab_size) {
    throw SchemaError("checkpoint: vocabulary size disagrees with the model config");
  }
  Model m(ckpt.config);
  m.assign_parameters(ckpt.params);
  return m;
}

}  // namespace biasly::model
