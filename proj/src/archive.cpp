#include "srres/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace srres {

static_assert(std::endian::native == std::endian::little, "archive IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'R', 'R', 'E', 'S', 'C', 'K', 'P'};
// Sanity bounds against corrupt length fields.
constexpr std::uint64_t kMaxName = 1 << 16;
constexpr std::uint64_t kMaxBytes = std::uint64_t{1} << 34;

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  Reader(std::istream& is, const std::filesystem::path& path) : is_(is), path_(path) {}

  template <class T>
  T pod() {
    T v{};
    bytes(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }

  void bytes(char* dst, std::size_t n) {
    if (!is_.read(dst, static_cast<std::streamsize>(n))) fail("unexpected end of file");
  }

  template <class Len>
  std::string str(std::uint64_t max_len) {
    const std::uint64_t n = pod<Len>();
    if (n > max_len) fail("implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw std::runtime_error("corrupt archive '" + path_.string() + "': " + why);
  }

 private:
  std::istream& is_;
  const std::filesystem::path& path_;
};

}  // namespace

const nn::Tensor& Archive::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("archive has no array '" + name + "'");
  return it->second;
}

const std::string& Archive::string(const std::string& name) const {
  auto it = strings_.find(name);
  if (it == strings_.end()) throw std::out_of_range("archive has no string '" + name + "'");
  return it->second;
}

void Archive::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write archive '" + path.string() + "'");
  os.write(kMagic, sizeof kMagic);
  write_pod<std::uint32_t>(os, kVersion);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(strings_.size()));
  for (const auto& [name, value] : strings_) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint64_t>(os, value.size());
    os.write(value.data(), static_cast<std::streamsize>(value.size()));
  }
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& [name, t] : tensors_) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(os, 4);
    for (int d : t.shape()) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os.flush()) throw std::runtime_error("failed writing archive '" + path.string() + "'");
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open archive '" + path.string() + "'");
  Reader r(is, path);
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) r.fail("bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) {
    throw std::runtime_error("archive '" + path.string() + "' has format version " +
                             std::to_string(version) + ", expected " + std::to_string(kVersion));
  }
  Archive a;
  const auto n_strings = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_strings; ++i) {
    std::string name = r.str<std::uint32_t>(kMaxName);
    a.strings_[name] = r.str<std::uint64_t>(kMaxBytes);
  }
  const auto n_tensors = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str<std::uint32_t>(kMaxName);
    if (r.pod<std::uint32_t>() != 4) r.fail("array '" + name + "' is not four-dimensional");
    int dims[4];
    std::uint64_t count = 1;
    for (int& d : dims) {
      const auto v = r.pod<std::uint32_t>();
      if (v == 0 || v > (1u << 30)) r.fail("array '" + name + "' has an invalid dimension");
      d = static_cast<int>(v);
      count *= v;
    }
    if (count * sizeof(double) > kMaxBytes) r.fail("array '" + name + "' is implausibly large");
    nn::Tensor t(dims[0], dims[1], dims[2], dims[3]);
    r.bytes(reinterpret_cast<char*>(t.data()), t.size() * sizeof(double));
    a.tensors_[name] = std::move(t);
  }
  if (is.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes");
  return a;
}

}  // namespace srres
