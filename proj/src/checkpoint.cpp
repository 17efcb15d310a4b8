#include <bit>
#include <cstring>
#include <fstream>

#include "dcae/dcae.hpp"
#include "dcae/error.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace dcae {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'D', 'C', 'K', 'P'};
constexpr std::uint16_t kVersion = 1;

template <typename V>
void put(std::ostream& o, V v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
void put_array(std::ostream& o, const V* p, std::size_t n) {
  o.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(V)));
}

struct Reader {
  std::ifstream in;
  std::string path;

  template <typename V>
  V get() {
    V v{};
    read(&v, 1);
    return v;
  }
  template <typename V>
  void read(V* p, std::size_t n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(V)));
    require(in.gcount() == static_cast<std::streamsize>(n * sizeof(V)), ErrorCode::LengthMismatch,
            path + ": checkpoint truncated");
  }
};

void write_header(std::ostream& o, const json& header) {
  o.write(kMagic, 4);
  put(o, kVersion);
  const std::string text = header.dump();
  put(o, static_cast<std::uint64_t>(text.size()));
  o.write(text.data(), static_cast<std::streamsize>(text.size()));
}

json read_header(Reader& r) {
  char magic[4];
  r.read(magic, 4);
  require(std::memcmp(magic, kMagic, 4) == 0, ErrorCode::MalformedHeader, r.path + ": not a checkpoint");
  const auto version = r.get<std::uint16_t>();
  require(version == kVersion, ErrorCode::UnsupportedFeature,
          r.path + ": checkpoint version " + std::to_string(version));
  const auto len = r.get<std::uint64_t>();
  require(len < (1u << 24), ErrorCode::MalformedHeader, r.path + ": implausible header length");
  std::string text(len, '\0');
  r.read(text.data(), len);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedHeader, r.path + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  const auto& model = *state.model;
  json header{{"kind", "dcae"},
              {"config", model.config()},
              {"seed", state.seed},
              {"epochs_done", state.epochs_done},
              {"lr", state.optimizer.options().lr}};

  // Write to a sibling and rename so an interrupted save never clobbers the last good file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    require(bool(o), ErrorCode::Io, "cannot write " + tmp.string());
    write_header(o, header);
    const auto params = model.parameters();
    for (const auto& p : params) {
      put(o, static_cast<std::uint64_t>(p.tensor.numel()));
      put_array(o, p.tensor.value().data(), p.tensor.numel());
    }
    for (auto* bn : const_cast<DcaeModel<float>&>(model).batch_norms()) {
      put(o, static_cast<std::uint64_t>(bn->running_mean.size()));
      put_array(o, bn->running_mean.data(), bn->running_mean.size());
      put_array(o, bn->running_var.data(), bn->running_var.size());
    }
    auto& opt = const_cast<nn::Adam<float>&>(state.optimizer);
    const bool has_opt = opt.first_moment().size() == params.size();
    put(o, static_cast<std::uint8_t>(has_opt));
    if (has_opt) {
      put(o, static_cast<std::uint64_t>(opt.steps()));
      for (std::size_t i = 0; i < params.size(); ++i) {
        put_array(o, opt.first_moment()[i].data(), opt.first_moment()[i].size());
        put_array(o, opt.second_moment()[i].data(), opt.second_moment()[i].size());
      }
    }
    require(bool(o), ErrorCode::Io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  Reader r{std::ifstream(path, std::ios::binary), path.string()};
  require(bool(r.in), ErrorCode::Io, "cannot open " + path.string());
  const json header = read_header(r);
  require(header.value("kind", "") == "dcae", ErrorCode::UnsupportedFeature,
          path.string() + " does not hold a trainable model");

  DcaeConfig cfg = header.at("config").get<DcaeConfig>();
  TrainState s = make_train_state(cfg, header.at("seed").get<std::uint64_t>(), header.at("lr").get<double>());
  s.epochs_done = header.at("epochs_done").get<std::size_t>();

  const auto params = s.model->parameters();
  for (const auto& p : params) {
    const auto n = r.get<std::uint64_t>();
    require(n == p.tensor.numel(), ErrorCode::LengthMismatch,
            path.string() + ": parameter " + p.name + " has " + std::to_string(n) + " values, expected " +
                std::to_string(p.tensor.numel()));
    auto t = p.tensor;
    r.read(t.value().data(), n);
  }
  for (auto* bn : s.model->batch_norms()) {
    const auto c = r.get<std::uint64_t>();
    require(c == bn->running_mean.size(), ErrorCode::LengthMismatch, path.string() + ": batch-norm size mismatch");
    r.read(bn->running_mean.data(), c);
    r.read(bn->running_var.data(), c);
  }
  if (r.get<std::uint8_t>()) {
    s.optimizer.set_steps(r.get<std::uint64_t>());
    for (std::size_t i = 0; i < params.size(); ++i) {
      r.read(s.optimizer.first_moment()[i].data(), s.optimizer.first_moment()[i].size());
      r.read(s.optimizer.second_moment()[i].data(), s.optimizer.second_moment()[i].size());
    }
  }
  return s;
}

void save_identity_checkpoint(const std::filesystem::path& path, std::size_t channels, std::size_t time) {
  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  require(bool(o), ErrorCode::Io, "cannot write " + path.string());
  write_header(o, json{{"kind", "identity"}, {"channels", channels}, {"time", time}});
}

std::unique_ptr<Reconstructor> load_reconstructor(const std::filesystem::path& path) {
  std::string kind;
  json header;
  {
    Reader r{std::ifstream(path, std::ios::binary), path.string()};
    require(bool(r.in), ErrorCode::Io, "cannot open " + path.string());
    header = read_header(r);
    kind = header.value("kind", "");
  }
  if (kind == "identity")
    return std::make_unique<IdentityModel>(header.at("channels").get<std::size_t>(),
                                           header.at("time").get<std::size_t>());
  require(kind == "dcae", ErrorCode::UnsupportedFeature, path.string() + ": unknown model kind '" + kind + "'");
  return std::make_unique<ModelReconstructor>(load_checkpoint(path).model);
}

}  // namespace dcae
