#include "condnet/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace condnet {
namespace {

using json = nlohmann::json;

constexpr std::array<char, 8> kMagic = {'C', 'N', 'D', 'N', 'E', 'T', 'C', 'K'};

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_f64s(std::ostream& os, std::span<const double> xs) {
  std::vector<char> buf(xs.size() * 8);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto bits = std::bit_cast<std::uint64_t>(xs[k]);
    for (int i = 0; i < 8; ++i) buf[k * 8 + i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void get_f64s(std::istream& is, std::span<double> xs, const std::string& name) {
  std::vector<unsigned char> buf(xs.size() * 8);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw std::runtime_error("checkpoint: truncated tensor '" + name + "'");
  for (std::size_t k = 0; k < xs.size(); ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[k * 8 + i]) << (8 * i);
    xs[k] = std::bit_cast<double>(bits);
  }
}

struct TensorRef {
  std::string name;
  std::size_t rows, cols;
  std::span<double> data;
};

// Storage order: hidden layers (w, b), output (w, b), then policies (z, d).
std::vector<TensorRef> tensor_table(Model& m) {
  std::vector<TensorRef> t;
  for (std::size_t l = 0; l < m.net.hidden.size(); ++l) {
    auto& layer = m.net.hidden[l];
    const std::string p = "hidden." + std::to_string(l);
    t.push_back({p + ".w", layer.w.rows(), layer.w.cols(), layer.w.flat()});
    t.push_back({p + ".b", 1, layer.b.size(), layer.b});
  }
  t.push_back({"out.w", m.net.out.w.rows(), m.net.out.w.cols(), m.net.out.w.flat()});
  t.push_back({"out.b", 1, m.net.out.b.size(), m.net.out.b});
  for (std::size_t l = 0; l < m.policies.size(); ++l) {
    auto& pol = m.policies[l];
    const std::string p = "policy." + std::to_string(l);
    t.push_back({p + ".z", pol.z.rows(), pol.z.cols(), pol.z.flat()});
    t.push_back({p + ".d", 1, pol.d.size(), pol.d});
  }
  return t;
}

json arch_to_json(const Architecture& a) {
  json layers = json::array();
  for (const auto& l : a.hidden) layers.push_back({{"n_blocks", l.n_blocks}, {"block_size", l.block_size}});
  return {{"n_inputs", a.n_inputs},
          {"n_classes", a.n_classes},
          {"activation", to_string(a.activation)},
          {"hidden", layers}};
}

Architecture arch_from_json(const json& j) {
  Architecture a;
  a.n_inputs = j.at("n_inputs").get<std::size_t>();
  a.n_classes = j.at("n_classes").get<std::size_t>();
  a.activation = activation_from_string(j.at("activation").get<std::string>());
  for (const auto& l : j.at("hidden"))
    a.hidden.push_back({l.at("n_blocks").get<std::size_t>(), l.at("block_size").get<std::size_t>()});
  a.validate();
  return a;
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  Model m = ck.model;  // tensor_table hands out mutable spans
  json header;
  header["format"] = "condnet-checkpoint";
  header["architecture"] = arch_to_json(m.net.arch);
  header["model_kind"] = to_string(m.kind);
  header["uniform_rate"] = m.uniform_rate;
  header["seed"] = ck.seed;
  header["metadata"] = ck.metadata;
  json tensors = json::array();
  const auto table = tensor_table(m);
  for (const auto& t : table) tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  header["tensors"] = tensors;
  const std::string text = header.dump();

  os.write(kMagic.data(), kMagic.size());
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : table) put_f64s(os, t.data);
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw std::runtime_error("checkpoint: bad magic at offset 0");
  const std::uint32_t version = get_u32(is, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t len = get_u32(is, "header length");
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw std::runtime_error("checkpoint: truncated header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed header: ") + e.what());
  }

  Checkpoint ck;
  try {
    if (header.at("format") != "condnet-checkpoint")
      throw std::runtime_error("checkpoint: unexpected format tag");
    const Architecture arch = arch_from_json(header.at("architecture"));
    ck.model.kind = model_kind_from_string(header.at("model_kind").get<std::string>());
    ck.model.uniform_rate = header.at("uniform_rate").get<Vector>();
    ck.seed = header.at("seed").get<std::uint64_t>();
    ck.metadata = header.at("metadata").get<std::map<std::string, std::string>>();

    Rng unused;
    ck.model.net = NetworkParams::zeros_like(init_glorot(arch, unused));
    if (ck.model.kind == ModelKind::condnet)
      ck.model.policies = init_policies(arch, unused, PolicyInit::zeros);

    const auto table = tensor_table(ck.model);
    const auto& listed = header.at("tensors");
    if (listed.size() != table.size())
      throw std::runtime_error("checkpoint: expected " + std::to_string(table.size()) +
                               " tensors, header lists " + std::to_string(listed.size()));
    for (std::size_t i = 0; i < table.size(); ++i) {
      const auto& t = table[i];
      if (listed[i].at("name") != t.name || listed[i].at("rows") != t.rows ||
          listed[i].at("cols") != t.cols)
        throw std::runtime_error("checkpoint: tensor " + std::to_string(i) +
                                 " does not match the architecture (expected " + t.name + ")");
      get_f64s(is, t.data, t.name);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: bad header field: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(os, ck);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  return read_checkpoint(is);
}

}  // namespace condnet
