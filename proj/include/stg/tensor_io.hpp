// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary tensor container. Layout (little-endian):
//   magic "STGT" | u8 version | u8 rank | rank x u32 dims | payload
// Version 1 stores float32 payloads and is used for dataset feature files;
// version 2 stores float64 and is used inside checkpoints, where round-trips
// must be bit-exact. Readers accept both.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "stg/common.hpp"
#include "stg/tensor.hpp"

namespace stg {

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");

inline constexpr std::uint8_t kTensorFormatFloat32 = 1;
inline constexpr std::uint8_t kTensorFormatFloat64 = 2;

inline void write_tensor_stream(std::ostream& os, const Shape& shape,
                                const std::vector<double>& data,
                                std::uint8_t version = kTensorFormatFloat32) {
  STG_CHECK(version == kTensorFormatFloat32 || version == kTensorFormatFloat64,
            "tensor write: unsupported version");
  STG_CHECK(shape.size() <= 8, "tensor write: rank > 8");
  STG_CHECK(data.size() == shape_numel(shape), "tensor write: size/shape mismatch");
  os.write("STGT", 4);
  const auto rank = static_cast<std::uint8_t>(shape.size());
  os.put(static_cast<char>(version));
  os.put(static_cast<char>(rank));
  for (size_t d : shape) {
    STG_CHECK(d <= 0xffffffffULL, "tensor write: dim exceeds u32");
    const auto d32 = static_cast<std::uint32_t>(d);
    os.write(reinterpret_cast<const char*>(&d32), 4);
  }
  if (version == kTensorFormatFloat32) {
    std::vector<float> f(data.size());
    for (size_t i = 0; i < data.size(); ++i) f[i] = static_cast<float>(data[i]);
    os.write(reinterpret_cast<const char*>(f.data()),
             static_cast<std::streamsize>(f.size() * sizeof(float)));
  } else {
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  STG_CHECK(os.good(), "tensor write: stream failure");
}

struct LoadedTensor {
  Shape shape;
  std::vector<double> data;
  std::uint8_t version = 0;
};

inline LoadedTensor read_tensor_stream(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  STG_CHECK(is.gcount() == 4 && std::memcmp(magic, "STGT", 4) == 0,
            "tensor read: bad magic");
  const int version = is.get();
  STG_CHECK(version == kTensorFormatFloat32 || version == kTensorFormatFloat64,
            "tensor read: unsupported version " + std::to_string(version));
  const int rank = is.get();
  STG_CHECK(rank >= 0 && rank <= 8, "tensor read: bad rank");
  LoadedTensor out;
  out.version = static_cast<std::uint8_t>(version);
  size_t numel = 1;
  for (int i = 0; i < rank; ++i) {
    std::uint32_t d = 0;
    is.read(reinterpret_cast<char*>(&d), 4);
    STG_CHECK(is.gcount() == 4, "tensor read: truncated header");
    STG_CHECK(d > 0, "tensor read: zero dim");
    out.shape.push_back(d);
    numel *= d;
  }
  out.data.resize(numel);
  if (version == kTensorFormatFloat32) {
    std::vector<float> f(numel);
    is.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(numel * sizeof(float)));
    STG_CHECK(static_cast<size_t>(is.gcount()) == numel * sizeof(float),
              "tensor read: truncated payload");
    for (size_t i = 0; i < numel; ++i) out.data[i] = static_cast<double>(f[i]);
  } else {
    is.read(reinterpret_cast<char*>(out.data.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    STG_CHECK(static_cast<size_t>(is.gcount()) == numel * sizeof(double),
              "tensor read: truncated payload");
  }
  return out;
}

inline void write_tensor_file(const std::string& path, const Shape& shape,
                              const std::vector<double>& data,
                              std::uint8_t version = kTensorFormatFloat32) {
  std::ofstream os(path, std::ios::binary);
  STG_CONFIG_CHECK(os.is_open(), "cannot open for writing: " + path);
  write_tensor_stream(os, shape, data, version);
}

inline LoadedTensor read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  STG_CONFIG_CHECK(is.is_open(), "cannot open for reading: " + path);
  return read_tensor_stream(is);
}

}  // namespace stg
