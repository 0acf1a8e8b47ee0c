#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "srres/tensor.hpp"

namespace srres {

/// Named f64 arrays and strings in a little-endian binary file:
///
///   "SRRESCKP"  u32 version
///   u32 n_strings, then per entry: u32 len, name, u64 len, bytes
///   u32 n_arrays,  then per entry: u32 len, name, u32 ndim (=4),
///                  4 x u32 dims, prod(dims) x f64
///
/// Entries are written in name order, so equal contents give equal bytes.
class Archive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, nn::Tensor value) { tensors_[name] = std::move(value); }
  void put_string(const std::string& name, std::string value) { strings_[name] = std::move(value); }
  void put_scalar(const std::string& name, double v) { put(name, nn::Tensor::scalar(v)); }

  bool has(const std::string& name) const { return tensors_.count(name) != 0; }
  bool has_string(const std::string& name) const { return strings_.count(name) != 0; }
  const nn::Tensor& tensor(const std::string& name) const;
  const std::string& string(const std::string& name) const;
  double scalar(const std::string& name) const { return tensor(name).item(); }

  const std::map<std::string, nn::Tensor>& tensors() const { return tensors_; }
  const std::map<std::string, std::string>& strings() const { return strings_; }

  void save(const std::filesystem::path& path) const;
  /// Throws std::runtime_error on a missing, truncated or corrupt file and
  /// on a version other than kVersion.
  static Archive load(const std::filesystem::path& path);

  friend bool operator==(const Archive&, const Archive&) = default;

 private:
  std::map<std::string, nn::Tensor> tensors_;
  std::map<std::string, std::string> strings_;
};

}  // namespace srres
