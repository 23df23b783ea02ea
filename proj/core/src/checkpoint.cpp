#include "ecse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ecse {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'E', 'C', 'S', 'E', 'B', 'B', '0', '1'};
constexpr std::uint32_t kTagMlp = 1;
constexpr std::uint32_t kTagPet = 2;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_params(std::ofstream& out, std::span<const double> params) {
  write_pod<std::uint64_t>(out, params.size());
  write_bytes(out, params.data(), params.size() * sizeof(double));
}

std::vector<double> read_params(std::ifstream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  std::vector<double> params(n);
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated parameter block");
  return params;
}

}  // namespace

void save_checkpoint(const std::string& path, const MlpBackbone& model,
                     std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_bytes(out, kMagic, 8);
  write_pod<std::uint32_t>(out, kTagMlp);
  write_pod<std::uint64_t>(out, seed);
  const MlpConfig& c = model.config();
  write_pod<std::int32_t>(out, c.n_species);
  write_pod<std::int32_t>(out, c.d_emb);
  write_pod<std::int32_t>(out, c.d_hidden);
  write_pod<std::int32_t>(out, c.max_neighbors);
  write_pod<std::uint32_t>(out, c.output == OutputKind::Scalar ? 0u : 1u);
  write_pod<double>(out, c.r_c);
  write_pod<double>(out, c.delta_rc);
  write_params(out, model.parameters());
}

void save_checkpoint(const std::string& path, const PetBackbone& model,
                     std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_bytes(out, kMagic, 8);
  write_pod<std::uint32_t>(out, kTagPet);
  write_pod<std::uint64_t>(out, seed);
  const PetConfig& c = model.config();
  write_pod<std::int32_t>(out, c.n_species);
  write_pod<std::int32_t>(out, c.d_pet);
  write_pod<std::int32_t>(out, c.n_gnn);
  write_pod<std::int32_t>(out, c.n_tl);
  write_pod<std::int32_t>(out, c.n_heads);
  write_pod<std::int32_t>(out, c.d_ffn);
  std::uint32_t flags = 0;
  if (c.two_body) flags |= 1u;
  if (c.use_attribute_channel) flags |= 2u;
  if (c.species_first_messages) flags |= 4u;
  if (c.bond_mode == BondMode::Average) flags |= 8u;
  write_pod<std::uint32_t>(out, flags);
  write_pod<double>(out, c.r_c);
  write_pod<double>(out, c.delta_rc);
  write_params(out, model.parameters());
}

LoadedBackbone load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  const auto tag = read_pod<std::uint32_t>(in);
  const auto seed = read_pod<std::uint64_t>(in);

  LoadedBackbone loaded;
  loaded.seed = seed;
  if (tag == kTagMlp) {
    MlpConfig c;
    c.n_species = read_pod<std::int32_t>(in);
    c.d_emb = read_pod<std::int32_t>(in);
    c.d_hidden = read_pod<std::int32_t>(in);
    c.max_neighbors = read_pod<std::int32_t>(in);
    c.output = read_pod<std::uint32_t>(in) == 0 ? OutputKind::Scalar : OutputKind::Vector;
    c.r_c = read_pod<double>(in);
    c.delta_rc = read_pod<double>(in);
    auto model = std::make_unique<MlpBackbone>(c);
    const auto params = read_params(in);
    if (params.size() != model->parameters().size())
      throw std::runtime_error("checkpoint: parameter count does not match shape");
    std::copy(params.begin(), params.end(), model->parameters().begin());
    loaded.model = std::move(model);
  } else if (tag == kTagPet) {
    PetConfig c;
    c.n_species = read_pod<std::int32_t>(in);
    c.d_pet = read_pod<std::int32_t>(in);
    c.n_gnn = read_pod<std::int32_t>(in);
    c.n_tl = read_pod<std::int32_t>(in);
    c.n_heads = read_pod<std::int32_t>(in);
    c.d_ffn = read_pod<std::int32_t>(in);
    const auto flags = read_pod<std::uint32_t>(in);
    c.two_body = flags & 1u;
    c.use_attribute_channel = flags & 2u;
    c.species_first_messages = flags & 4u;
    c.bond_mode = (flags & 8u) ? BondMode::Average : BondMode::Sum;
    c.r_c = read_pod<double>(in);
    c.delta_rc = read_pod<double>(in);
    auto model = std::make_unique<PetBackbone>(c);
    const auto params = read_params(in);
    if (params.size() != model->parameters().size())
      throw std::runtime_error("checkpoint: parameter count does not match shape");
    std::copy(params.begin(), params.end(), model->parameters().begin());
    loaded.model = std::move(model);
  } else {
    throw std::runtime_error("checkpoint: unknown backbone tag");
  }
  return loaded;
}

}  // namespace ecse
