#include "scout/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace scout {

namespace {

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(v));
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  write_bytes(os, s.data(), s.size());
}

void read_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) {
    throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what);
  }
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  read_bytes(is, &v, sizeof(v), what);
  return v;
}

std::string read_string(std::istream& is, const char* what) {
  const auto n = read_pod<std::uint32_t>(is, what);
  std::string s(n, '\0');
  read_bytes(is, s.data(), n, what);
  return s;
}

struct Header {
  std::uint8_t model_kind = 0;  // 0 backbone, 1 scout
  std::uint8_t frozen = 0;
  std::uint8_t partition_case = 0;  // 0 none, 1 case1, 2 case2
  std::uint8_t mechanism = 255;     // 255 none
  ModelConfig config;
};

void write_header(std::ostream& os, const Header& h) {
  write_bytes(os, kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod(os, h.model_kind);
  write_pod(os, h.frozen);
  write_pod(os, h.partition_case);
  write_pod(os, h.mechanism);
  write_pod<std::uint64_t>(os, h.config.vocab_size);
  write_pod<std::uint64_t>(os, h.config.model_dim);
  write_pod<std::uint64_t>(os, h.config.num_heads);
  write_pod<std::uint64_t>(os, h.config.num_layers);
  write_pod<std::uint64_t>(os, h.config.max_seq_len);
  write_pod<std::uint64_t>(os, h.config.num_iterations);
}

Header read_header(std::istream& is, const std::filesystem::path& path) {
  char magic[8];
  read_bytes(is, magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version) + " in " + path.string());
  }
  Header h;
  h.model_kind = read_pod<std::uint8_t>(is, "model_kind");
  h.frozen = read_pod<std::uint8_t>(is, "frozen");
  h.partition_case = read_pod<std::uint8_t>(is, "partition_case");
  h.mechanism = read_pod<std::uint8_t>(is, "mechanism");
  h.config.vocab_size = read_pod<std::uint64_t>(is, "vocab_size");
  h.config.model_dim = read_pod<std::uint64_t>(is, "model_dim");
  h.config.num_heads = read_pod<std::uint64_t>(is, "num_heads");
  h.config.num_layers = read_pod<std::uint64_t>(is, "num_layers");
  h.config.max_seq_len = read_pod<std::uint64_t>(is, "max_seq_len");
  h.config.num_iterations = read_pod<std::uint64_t>(is, "num_iterations");
  return h;
}

void write_params(std::ostream& os, const ParameterStore& params) {
  write_pod<std::uint64_t>(os, params.entries().size());
  for (const auto& e : params.entries()) {
    write_string(os, e.name);
    write_pod<std::uint8_t>(os, e.is_new ? 1 : 0);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) write_pod<std::uint64_t>(os, d);
    write_bytes(os, e.tensor.data().data(), e.tensor.size() * sizeof(double));
  }
}

// Overwrites the values of an already-constructed model's parameters;
// name, order, and shape must match the file exactly.
void read_params_into(std::istream& is, ParameterStore& params,
                      const std::filesystem::path& path) {
  const auto count = read_pod<std::uint64_t>(is, "tensor count");
  if (count != params.entries().size()) {
    throw std::runtime_error("checkpoint: " + path.string() + " holds " +
                             std::to_string(count) + " tensors, model expects " +
                             std::to_string(params.entries().size()));
  }
  for (const auto& e : params.entries()) {
    const std::string name = read_string(is, "tensor name");
    if (name != e.name) {
      throw std::runtime_error("checkpoint: tensor '" + name + "' where '" +
                               e.name + "' was expected in " + path.string());
    }
    read_pod<std::uint8_t>(is, "group tag");
    const auto rank = read_pod<std::uint32_t>(is, "rank");
    Shape shape(rank);
    for (auto& d : shape) d = read_pod<std::uint64_t>(is, "extent");
    if (shape != e.tensor.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name +
                               "': file has " + shape_to_string(shape) +
                               ", model has " + shape_to_string(e.tensor.shape()));
    }
    Tensor t = e.tensor;
    read_bytes(is, t.raw_data().data(), t.size() * sizeof(double), name.c_str());
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read " + path.string());
  return is;
}

}  // namespace

void save_backbone(const std::filesystem::path& path, const Transformer& model,
                   bool frozen) {
  auto os = open_out(path);
  Header h;
  h.model_kind = 0;
  h.frozen = frozen || model.frozen() ? 1 : 0;
  h.config = model.config();
  write_header(os, h);
  write_params(os, model.params());
}

void save_scout_model(const std::filesystem::path& path, const ScoutModel& model) {
  auto os = open_out(path);
  Header h;
  h.model_kind = 1;
  h.partition_case = model.partition_case() == PartitionCase::Case1 ? 1 : 2;
  h.mechanism = static_cast<std::uint8_t>(model.mechanism());
  h.config = model.config();
  write_header(os, h);
  write_params(os, model.params());
}

Transformer load_backbone(const std::filesystem::path& path) {
  auto is = open_in(path);
  const Header h = read_header(is, path);
  if (h.model_kind != 0) {
    throw std::runtime_error("checkpoint: " + path.string() +
                             " is not a backbone checkpoint");
  }
  Transformer model(h.config, /*seed=*/0);
  read_params_into(is, model.params(), path);
  model.set_frozen(h.frozen != 0);
  return model;
}

ScoutModel load_scout_model(const std::filesystem::path& path) {
  auto is = open_in(path);
  const Header h = read_header(is, path);
  if (h.model_kind != 1) {
    throw std::runtime_error("checkpoint: " + path.string() +
                             " is not a recursive-model checkpoint");
  }
  const PartitionCase pcase =
      h.partition_case == 1 ? PartitionCase::Case1 : PartitionCase::Case2;
  if (h.mechanism > 5) {
    throw std::runtime_error("checkpoint: invalid mechanism tag in " + path.string());
  }
  ScoutModel model(h.config, pcase, static_cast<MechanismKind>(h.mechanism),
                   /*seed=*/0);
  read_params_into(is, model.params(), path);
  return model;
}

bool checkpoint_is_backbone(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_header(is, path).model_kind == 0;
}

bool checkpoint_frozen_flag(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_header(is, path).frozen != 0;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
  }
  return h;
}

std::string checksum_hex(std::uint64_t checksum) {
  std::ostringstream os;
  os << std::hex << checksum;
  return os.str();
}

std::uint64_t params_checksum(const ParameterStore& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& e : params.entries()) {
    h = fnv1a(e.name.data(), e.name.size(), h);
    h = fnv1a(e.tensor.data().data(), e.tensor.size() * sizeof(double), h);
  }
  return h;
}

}  // namespace scout
