#include "pasnet/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "pasnet/binary_io.hpp"

namespace pasnet {
namespace binio {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace binio

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& state) {
  binio::Writer w;
  w.bytes("PASW", 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, t] : state) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
    w.bytes(t.data().data(), t.numel() * sizeof(float));
  }
  return std::move(w.buffer());
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  binio::Reader r(bytes, "checkpoint");
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::string(magic, 4) != "PASW") r.fail("bad magic", 0);
  const auto version_at = r.offset();
  if (r.get<std::uint32_t>("version") != kCheckpointVersion) r.fail("unsupported version", version_at);
  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "name");
    const auto rank_at = r.offset();
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank == 0 || rank > 8) r.fail("implausible rank " + std::to_string(rank), rank_at);
    Shape shape(rank);
    for (auto& e : shape) {
      const auto at = r.offset();
      e = r.get<std::uint32_t>("extent");
      if (e == 0) r.fail("zero extent", at);
    }
    const auto data_at = r.offset();
    double bytes_needed = sizeof(float);
    for (auto e : shape) bytes_needed *= static_cast<double>(e);
    if (bytes_needed > static_cast<double>(r.remaining())) r.fail("truncated tensor data for " + name, data_at);
    std::vector<float> values(shape_numel(shape));
    r.bytes(values.data(), values.size() * sizeof(float), "tensor data");
    out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
  }
  if (!r.at_end()) r.fail("trailing bytes", r.offset());
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& state) {
  binio::write_file(path, encode_checkpoint(state));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(binio::read_file(path));
}

}  // namespace pasnet
