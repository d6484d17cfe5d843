// Copyright 2026 The adaptlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adaptlab/autodiff/serialize.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

#include "adaptlab/errors.hpp"

namespace adaptlab::ad {
namespace {

constexpr std::array<char, 4> kMagic = {'A', 'D', 'L', 'T'};

template <class U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> buf;
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf.data(), buf.size());
}

template <class U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> buf;
  if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) throw DataError("read_tensor: truncated record");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_le<std::uint64_t>(os, d);
  for (double v : t.values()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw DataError("write_tensor: stream error");
}

Tensor read_tensor(std::istream& is) {
  std::array<char, 4> magic;
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw DataError("read_tensor: bad magic");
  const auto rank = get_le<std::uint32_t>(is);
  if (rank == 0 || rank > 8) throw DataError("read_tensor: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(is));
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("save_tensor: cannot open " + path);
  write_tensor(os, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_tensor: cannot open " + path);
  return read_tensor(is);
}

}  // namespace adaptlab::ad
