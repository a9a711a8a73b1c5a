#pragma once

#include <cstdio>
#include <cstring>

#include "rivercast/tensor.hpp"

namespace rivercast {

// Thin RAII file wrapper plus the shared tensor record codec:
//   name length u16, name bytes, rank u8, dims u32 each, f64 payload.
// Multi-byte fields are little-endian (written raw on little-endian hosts).
class BinFile {
 public:
  BinFile(const std::string& path, const char* mode) : path_(path) {
    f_ = std::fopen(path.c_str(), mode);
    require(f_ != nullptr, "cannot open " + path);
  }
  ~BinFile() {
    if (f_) std::fclose(f_);
  }
  BinFile(const BinFile&) = delete;
  BinFile& operator=(const BinFile&) = delete;

  void write(const void* p, std::size_t n) { require(std::fwrite(p, 1, n, f_) == n, "write failed: " + path_); }
  void read(void* p, std::size_t n) { require(std::fread(p, 1, n, f_) == n, "truncated file: " + path_); }

  template <typename T>
  void put(T v) {
    write(&v, sizeof(T));
  }
  template <typename T>
  T get() {
    T v{};
    read(&v, sizeof(T));
    return v;
  }

  void put_bytes(const std::string& s) {
    put<std::uint64_t>(s.size());
    write(s.data(), s.size());
  }
  std::string get_bytes() {
    std::uint64_t n = get<std::uint64_t>();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  void put_tensor(const std::string& name, const Shape& shape, const double* data) {
    require(name.size() <= 0xffff, "tensor name too long");
    put<std::uint16_t>(std::uint16_t(name.size()));
    write(name.data(), name.size());
    put<std::uint8_t>(std::uint8_t(shape.size()));
    std::size_t n = 1;
    for (int d : shape) {
      put<std::uint32_t>(std::uint32_t(d));
      n *= std::size_t(d);
    }
    write(data, n * sizeof(double));
  }

  std::pair<std::string, Tensor> get_tensor() {
    std::uint16_t len = get<std::uint16_t>();
    std::string name(len, '\0');
    read(name.data(), len);
    std::uint8_t rank = get<std::uint8_t>();
    Shape shape(rank);
    for (int d = 0; d < rank; ++d) shape[std::size_t(d)] = int(get<std::uint32_t>());
    Tensor t = Tensor::zeros(shape);
    read(t.data(), t.numel() * sizeof(double));
    return {std::move(name), std::move(t)};
  }

 private:
  std::string path_;
  std::FILE* f_ = nullptr;
};

}  // namespace rivercast
