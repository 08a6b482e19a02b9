#include "ghost/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ghost {

namespace {

constexpr char kMagic[8] = {'G', 'H', 'S', 'T', 'C', 'K', 'P', '1'};

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw std::runtime_error("checkpoint: truncated payload");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return tensors[i];
  }
  throw std::out_of_range("checkpoint has no tensor named " + name);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  if (ckpt.names.size() != ckpt.tensors.size()) {
    throw std::invalid_argument("checkpoint: name/tensor count mismatch");
  }
  nlohmann::json header;
  header["kind"] = ckpt.kind;
  header["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
    header["tensors"].push_back(
        {{"name", ckpt.names[i]}, {"shape", ckpt.tensors[i].shape()}});
  }
  header["meta"] = ckpt.meta_json.empty()
                       ? nlohmann::json::object()
                       : nlohmann::json::parse(ckpt.meta_json);
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(kMagic, 8);
  const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
  unsigned char lb[4] = {static_cast<unsigned char>(hlen),
                         static_cast<unsigned char>(hlen >> 8),
                         static_cast<unsigned char>(hlen >> 16),
                         static_cast<unsigned char>(hlen >> 24)};
  out.write(reinterpret_cast<const char*>(lb), 4);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const Tensor& t : ckpt.tensors) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      write_u64_le(out, std::bit_cast<std::uint64_t>(t.at(i)));
    }
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  unsigned char lb[4];
  if (!in.read(reinterpret_cast<char*>(lb), 4)) {
    throw std::runtime_error("checkpoint: truncated header length");
  }
  const std::uint32_t hlen = std::uint32_t(lb[0]) | (std::uint32_t(lb[1]) << 8) |
                             (std::uint32_t(lb[2]) << 16) |
                             (std::uint32_t(lb[3]) << 24);
  std::string htext(hlen, '\0');
  if (!in.read(htext.data(), hlen)) {
    throw std::runtime_error("checkpoint: truncated header");
  }
  const nlohmann::json header = nlohmann::json::parse(htext);

  Checkpoint ckpt;
  ckpt.kind = header.at("kind").get<std::string>();
  ckpt.meta_json = header.at("meta").dump();
  for (const auto& entry : header.at("tensors")) {
    ckpt.names.push_back(entry.at("name").get<std::string>());
    std::vector<std::size_t> shape =
        entry.at("shape").get<std::vector<std::size_t>>();
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
      t.at(i) = std::bit_cast<double>(read_u64_le(in));
    }
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace ghost
