// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "budgetvit/checkpoint.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "budgetvit/errors.hpp"

namespace budgetvit {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'B', 'V', 'I', 'T', 'C', 'K', 'P', 'T'};
constexpr char kTrailer[8] = {'B', 'V', 'I', 'T', 'E', 'N', 'D', '\0'};
constexpr std::uint64_t kMaxManifest = 1u << 24;
constexpr std::uint32_t kMaxRank = 8;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename I>
  void put(I v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}
  template <typename I>
  I get(const std::string& field) {
    I v{};
    bytes(&v, sizeof v, field);
    return v;
  }
  void bytes(void* p, std::size_t n, const std::string& field) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) fail(field, "truncated file");
  }
  [[noreturn]] void fail(const std::string& field, const std::string& why) const {
    throw CheckpointError(path_ + ": " + why + " while reading " + field);
  }

 private:
  std::istream& is_;
  std::string path_;
};

TrainState parse_state(const std::string& manifest, const std::string& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(manifest);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw CheckpointError(path + ": malformed manifest (" + e.message() + ")");
  }
  auto field = [&](const char* key) {
    auto v = tree.get_optional<std::string>(std::string("state.") + key);
    if (!v) throw CheckpointError(path + ": manifest is missing state." + key);
    return *v;
  };
  TrainState s;
  try {
    s.epoch = std::stoi(field("epoch"));
    s.global_step = std::stoll(field("global_step"));
    s.optimizer_step = std::stoll(field("optimizer_step"));
    s.elapsed = std::stod(field("elapsed"));
    s.current_image_size = std::stoi(field("current_image_size"));
    s.grid = std::stoi(field("grid"));
    s.seed = std::stoull(field("seed"));
  } catch (const std::logic_error& e) {
    throw CheckpointError(path + ": manifest [state] holds a malformed number (" + e.what() + ")");
  }
  return s;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::string manifest_text(const RunConfig& config, const TrainState& state) {
  std::ostringstream out;
  out.precision(17);
  out << to_ini(config) << "\n[state]\n"
      << "epoch = " << state.epoch << '\n'
      << "global_step = " << state.global_step << '\n'
      << "optimizer_step = " << state.optimizer_step << '\n'
      << "elapsed = " << state.elapsed << '\n'
      << "current_image_size = " << state.current_image_size << '\n'
      << "grid = " << state.grid << '\n'
      << "seed = " << state.seed << '\n';
  return out.str();
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  // Write to a sibling then rename so a crash never leaves a torn checkpoint.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    Writer w(os);
    w.bytes(kMagic, sizeof kMagic);
    w.put<std::uint32_t>(kCheckpointVersion);
    const std::string manifest = manifest_text(ckpt.config, ckpt.state);
    w.put<std::uint64_t>(manifest.size());
    w.bytes(manifest.data(), manifest.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
      w.bytes(t.name.data(), t.name.size());
      w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
      w.put<std::uint32_t>(static_cast<std::uint32_t>(t.value.rank()));
      for (std::size_t d : t.value.shape()) w.put<std::uint64_t>(d);
      if (t.dtype == DType::F64) {
        w.bytes(t.value.data(), t.value.size() * sizeof(double));
      } else {
        std::vector<float> narrow(t.value.size());
        for (std::size_t i = 0; i < narrow.size(); ++i) narrow[i] = static_cast<float>(t.value[i]);
        w.bytes(narrow.data(), narrow.size() * sizeof(float));
      }
    }
    w.bytes(kTrailer, sizeof kTrailer);
    os.flush();
    if (!os) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(is, path.string());

  char magic[8];
  r.bytes(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) r.fail("magic", "not a budgetvit checkpoint");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    r.fail("version", "unsupported version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto manifest_len = r.get<std::uint64_t>("manifest length");
  if (manifest_len > kMaxManifest) r.fail("manifest length", "implausible value " + std::to_string(manifest_len));
  std::string manifest(manifest_len, '\0');
  r.bytes(manifest.data(), manifest.size(), "manifest");

  const auto state_at = manifest.find("\n[state]\n");
  if (state_at == std::string::npos) r.fail("manifest", "no [state] section");
  Checkpoint ckpt;
  try {
    ckpt.config = parse_run_config(manifest.substr(0, state_at), {}, DataCheck::SkipPaths);
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": manifest config is invalid: " + e.what());
  }
  ckpt.state = parse_state(manifest, path.string());

  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = "tensor #" + std::to_string(i);
    NamedTensor t;
    const auto name_len = r.get<std::uint32_t>(where + " name length");
    if (name_len > 4096) r.fail(where + " name length", "implausible value");
    t.name.resize(name_len);
    r.bytes(t.name.data(), name_len, where + " name");
    const std::string field = "tensor '" + t.name + "'";
    const auto dtype = r.get<std::uint8_t>(field + " dtype");
    if (dtype != 1 && dtype != 2) r.fail(field + " dtype", "unknown dtype " + std::to_string(dtype));
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint32_t>(field + " rank");
    if (rank > kMaxRank) r.fail(field + " rank", "implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>(field + " dims"));
    const std::size_t n = shape_numel(shape);
    if (n > (std::size_t{1} << 32)) r.fail(field + " dims", "implausible element count");
    t.value = Tensor<double>(shape);
    if (t.dtype == DType::F64) {
      r.bytes(t.value.data(), n * sizeof(double), field + " data");
    } else {
      std::vector<float> narrow(n);
      r.bytes(narrow.data(), n * sizeof(float), field + " data");
      for (std::size_t k = 0; k < n; ++k) t.value[k] = narrow[k];
    }
    ckpt.tensors.push_back(std::move(t));
  }
  char trailer[8];
  r.bytes(trailer, sizeof trailer, "trailer");
  if (std::memcmp(trailer, kTrailer, sizeof trailer) != 0) r.fail("trailer", "corrupt end marker");
  return ckpt;
}

}  // namespace budgetvit
