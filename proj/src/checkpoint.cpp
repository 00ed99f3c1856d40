#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "posg/errors.hpp"
#include "posg/net.hpp"

namespace posg::net {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'O', 'S', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("checkpoint: truncated stream");
  return value;
}

void write_config(std::ostream& out, const ModelConfig& config) {
  write_pod<std::int32_t>(out, config.n_layers);
  write_pod<std::int32_t>(out, config.n_heads);
  write_pod<std::int32_t>(out, config.d_model);
  write_pod<std::int32_t>(out, config.d_ff);
  write_pod<std::int32_t>(out, config.context_len);
  write_pod<std::int32_t>(out, config.vocab_size);
  write_pod<std::int32_t>(out, config.pos_count);
  write_pod<double>(out, config.dropout_rate);
  write_pod<std::uint64_t>(out, config.seed);
}

ModelConfig read_config(std::istream& in) {
  ModelConfig config;
  config.n_layers = read_pod<std::int32_t>(in);
  config.n_heads = read_pod<std::int32_t>(in);
  config.d_model = read_pod<std::int32_t>(in);
  config.d_ff = read_pod<std::int32_t>(in);
  config.context_len = read_pod<std::int32_t>(in);
  config.vocab_size = read_pod<std::int32_t>(in);
  config.pos_count = read_pod<std::int32_t>(in);
  config.dropout_rate = read_pod<double>(in);
  config.seed = read_pod<std::uint64_t>(in);
  return config;
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParams& params, const ModelConfig& config,
                     HeadKind head) {
  auto& mutable_params = const_cast<ModelParams&>(params);
  auto refs = tensor_refs(mutable_params);
  for (const auto& ref : refs)
    for (std::size_t i = 0; i < ref.size; ++i)
      if (!std::isfinite(ref.data[i]))
        throw InvalidArgument("save_checkpoint: non-finite value in " + ref.name);

  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, kVersion);
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(head));
  write_config(out, config);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(refs.size()));
  for (const auto& ref : refs) {
    write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(ref.name.size()));
    out.write(ref.name.data(), static_cast<std::streamsize>(ref.name.size()));
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(ref.shape.size()));
    for (const auto dim : ref.shape) write_pod<std::uint64_t>(out, dim);
    out.write(reinterpret_cast<const char*>(ref.data),
              static_cast<std::streamsize>(ref.size * sizeof(double)));
  }
  if (!out) throw DataError("save_checkpoint: write failure");
}

Checkpoint load_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic bytes");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw DataError("checkpoint: version mismatch: found " + std::to_string(version) +
                    ", expected " + std::to_string(kVersion));
  const auto head_byte = read_pod<std::uint8_t>(in);
  if (head_byte > 1) throw DataError("checkpoint: unknown head kind");

  Checkpoint ckpt;
  ckpt.head = static_cast<HeadKind>(head_byte);
  ckpt.config = read_config(in);
  ckpt.config.validate();
  ckpt.params = init_params(ckpt.config);

  auto refs = tensor_refs(ckpt.params);
  const auto n_tensors = read_pod<std::uint32_t>(in);
  if (n_tensors != refs.size()) throw DataError("checkpoint: tensor count mismatch");
  for (auto& ref : refs) {
    const auto name_len = read_pod<std::uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw DataError("checkpoint: truncated stream");
    if (name != ref.name)
      throw DataError("checkpoint: unexpected tensor '" + name + "', expected '" + ref.name + "'");
    const auto ndim = read_pod<std::uint8_t>(in);
    if (ndim != ref.shape.size()) throw DataError("checkpoint: rank mismatch for " + name);
    for (const auto expected : ref.shape) {
      const auto dim = read_pod<std::uint64_t>(in);
      if (dim != expected) throw DataError("checkpoint: shape mismatch for " + name);
    }
    in.read(reinterpret_cast<char*>(ref.data),
            static_cast<std::streamsize>(ref.size * sizeof(double)));
    if (!in) throw DataError("checkpoint: truncated stream");
  }
  // No trailing bytes allowed.
  in.peek();
  if (!in.eof()) throw DataError("checkpoint: trailing bytes after tensors");
  return ckpt;
}

void save_checkpoint_file(const std::string& path, const ModelParams& params,
                          const ModelConfig& config, HeadKind head) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint file: " + path);
  save_checkpoint(out, params, config, head);
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint file: " + path);
  return load_checkpoint(in);
}

}  // namespace posg::net
