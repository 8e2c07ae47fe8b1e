#include "dvio/params.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "dvio/util.hpp"

namespace dvio::nn {

namespace {

constexpr char kMagic[8] = {'D', 'V', 'I', 'O', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

Parameter& ParameterStore::create(const std::string& name, Tensor init) {
  if (by_name_.count(name))
    fail(ErrorKind::InvalidArgument, "duplicate parameter name: " + name);
  params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
  by_name_[name] = params_.back().get();
  return *params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) fail(ErrorKind::InvalidArgument, "no such parameter: " + name);
  return *it->second;
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) fail(ErrorKind::InvalidArgument, "no such parameter: " + name);
  return *it->second;
}

bool ParameterStore::has(const std::string& name) const { return by_name_.count(name) > 0; }

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

int ParameterStore::total_values() const {
  int n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_all_grads() {
  for (auto& p : params_) p->zero_grad();
}

void ParameterStore::save(const std::string& path,
                          const std::vector<std::string>& manifest_extra) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path);
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(params_.size()));
  for (const auto& p : params_) {
    put_u32(out, static_cast<uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(out, static_cast<uint32_t>(p->value.rank()));
    for (int e : p->value.shape) put_u32(out, static_cast<uint32_t>(e));
    for (double v : p->value.data) put_f64(out, v);
  }
  if (!out) fail(ErrorKind::Io, "short write on checkpoint " + path);

  std::string manifest;
  for (const auto& line : manifest_extra) manifest += line + "\n";
  for (const auto& p : params_)
    manifest += p->name + " " + shape_str(p->value.shape) + "\n";
  write_text_file(path + ".manifest", manifest);
}

void ParameterStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    fail(ErrorKind::MalformedData, "not a checkpoint file: " + path);
  uint32_t version = get_u32(in);
  if (version != kVersion)
    fail(ErrorKind::MalformedData, "unsupported checkpoint version " + std::to_string(version));
  uint32_t count = get_u32(in);
  params_.clear();
  by_name_.clear();
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint32_t rank = get_u32(in);
    Shape shape(rank);
    for (uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int>(get_u32(in));
    Tensor t(shape);
    for (auto& v : t.data) v = get_f64(in);
    if (!in) fail(ErrorKind::MalformedData, "truncated checkpoint " + path);
    create(name, std::move(t));
  }
}

}  // namespace dvio::nn
