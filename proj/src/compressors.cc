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
// =============================================================================

#include "gradcomp/compressors.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "bytes.h"
#include "gradcomp/half.h"
#include "parallel.h"

namespace gradcomp {
namespace {

using detail::GetCode;
using detail::GetF32;
using detail::GetU16;
using detail::GetU32;
using detail::GetU64;
using detail::PutCode;
using detail::PutF32;
using detail::PutU16;
using detail::PutU32;
using detail::PutU64;

// Elements per parallel task; a multiple of 8 so packed codes never share a
// byte across tasks.
constexpr std::size_t kTaskChunk = 1 << 16;

std::size_t TaskCount(std::size_t d) { return (d + kTaskChunk - 1) / kTaskChunk; }

[[noreturn]] void Malformed(const std::string& what, std::size_t offset) {
  throw Error(ErrorCode::kMalformedPayload, what, offset);
}

std::size_t ValueBytes(ValuePrecision p) {
  return p == ValuePrecision::kF16 ? 2 : 4;
}

float StoredValue(double v, ValuePrecision p, std::uint8_t* dst) {
  const float f = static_cast<float>(v);
  if (p == ValuePrecision::kF16) {
    const std::uint16_t h = FloatToHalf(f);
    PutU16(dst, h);
    return HalfToFloat(h);
  }
  PutF32(dst, f);
  return f;
}

float LoadValue(const std::uint8_t* src, ValuePrecision p) {
  return p == ValuePrecision::kF16 ? HalfToFloat(GetU16(src)) : GetF32(src);
}

CompressedMessage NewMessage(const CompressorKind& kind, std::size_t d) {
  CompressedMessage msg;
  msg.kind = kind;
  msg.original_len = d;
  msg.payload.assign(PayloadSize(kind, d), 0);
  return msg;
}

CompressedMessage SparseMessage(const GradientVector& x,
                                std::vector<std::uint32_t> indices,
                                double scale, CompressorTag tag,
                                ValuePrecision precision) {
  if (indices.size() * 8 > x.size()) {
    // Dense selections: a mark-and-scan pass beats sorting.
    std::vector<char> mark(x.size(), 0);
    for (std::uint32_t i : indices) mark[i] = 1;
    indices.clear();
    for (std::size_t j = 0; j < mark.size(); ++j) {
      if (mark[j]) indices.push_back(static_cast<std::uint32_t>(j));
    }
  } else {
    std::sort(indices.begin(), indices.end());
  }
  CompressorKind kind{tag, indices.size(), 0.0, 0, precision};
  CompressedMessage msg = NewMessage(kind, x.size());
  std::uint8_t* p = msg.payload.data();
  const std::size_t k = indices.size();
  PutU64(p, k);
  std::uint8_t* idx = p + 8;
  std::uint8_t* val = idx + 4 * k;
  const std::size_t vb = ValueBytes(precision);
  for (std::size_t i = 0; i < k; ++i) {
    PutU32(idx + 4 * i, indices[i]);
    const float stored =
        StoredValue(static_cast<double>(x[indices[i]]) * scale, precision,
                    val + vb * i);
    if (!std::isfinite(stored)) {
      throw Error(ErrorCode::kNonFinite,
                  "sparse value overflows its value precision");
    }
  }
  return msg;
}

// Strict total order: larger magnitude first, lower index on ties.
struct MagnitudeOrder {
  const float* x;
  bool operator()(std::uint32_t a, std::uint32_t b) const {
    const float fa = std::fabs(x[a]);
    const float fb = std::fabs(x[b]);
    return fa > fb || (fa == fb && a < b);
  }
};

void SelectTop(std::vector<std::uint32_t>& candidates, std::size_t k,
               const float* x) {
  if (candidates.size() > k) {
    std::nth_element(candidates.begin(), candidates.begin() + k,
                     candidates.end(), MagnitudeOrder{x});
    candidates.resize(k);
  }
}

void CheckDitherBits(int bits) {
  if (bits < 2 || bits > 8) {
    throw Error(ErrorCode::kInvalidArgument,
                "dither bits must be in [2, 8], got " + std::to_string(bits));
  }
}

// Encodes sign + level for every entry. level_of(r, u) maps the normalized
// magnitude and a uniform draw to the level field.
template <typename LevelFn>
CompressedMessage DitherEncode(const CompressorKind& kind,
                               const GradientVector& x, DeterministicRng& rng,
                               unsigned threads, LevelFn level_of) {
  const std::size_t d = x.size();
  const int bits = kind.bits;
  CompressedMessage msg = NewMessage(kind, d);
  const float norm = static_cast<float>(L2Norm(x));
  PutF32(msg.payload.data(), norm);
  std::uint8_t* codes = msg.payload.data() + 4;
  const std::uint64_t base = rng.counter();
  if (norm > 0.0f) {
    const double inv = 1.0 / static_cast<double>(norm);
    detail::ParallelFor(TaskCount(d), threads, [&](std::size_t task) {
      const std::size_t begin = task * kTaskChunk;
      const std::size_t end = std::min(d, begin + kTaskChunk);
      for (std::size_t j = begin; j < end; ++j) {
        const float v = x[j];
        const double r = std::fabs(static_cast<double>(v)) * inv;
        const std::uint32_t level = level_of(r, rng.UniformAt(base + j));
        const std::uint32_t sign = v < 0.0f ? 1u : 0u;
        const std::uint32_t code = sign | (level << 1);
        if (code != 0) PutCode(codes, j, bits, code);
      }
    });
  }
  rng.Advance(d);
  return msg;
}

struct LinearLevel {
  std::uint32_t s;
  std::uint32_t operator()(double r, double u) const {
    const double scaled = r * static_cast<double>(s);
    const double lo = std::floor(scaled);
    if (lo >= static_cast<double>(s)) return s;
    return static_cast<std::uint32_t>(lo) + (u < scaled - lo ? 1u : 0u);
  }
};

// Field f = i + 1 encodes the level 2^-i; f = 0 encodes zero.
struct NaturalLevel {
  std::uint32_t levels;
  std::uint32_t operator()(double r, double u) const {
    const double smallest = std::ldexp(1.0, -static_cast<int>(levels - 1));
    if (r >= 1.0) return 1u;
    if (r < smallest) return u < r / smallest ? levels : 0u;
    int e = 0;
    std::frexp(r, &e);  // r in [2^(e-1), 2^e)
    const double lo = std::ldexp(1.0, e - 1);
    const int i = u < (r - lo) / lo ? -e : 1 - e;
    return static_cast<std::uint32_t>(i + 1);
  }
};

}  // namespace

std::string CompressorTagName(CompressorTag tag) {
  switch (tag) {
    case CompressorTag::kNone: return "none";
    case CompressorTag::kFp16: return "fp16";
    case CompressorTag::kScaledSign: return "scaled_sign";
    case CompressorTag::kTopK: return "top_k";
    case CompressorTag::kRandomK: return "random_k";
    case CompressorTag::kLinearDither: return "linear_dither";
    case CompressorTag::kNaturalDither: return "natural_dither";
  }
  return "unknown";
}

CompressorTag ParseCompressorTag(const std::string& name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  for (int t = 0; t <= 6; ++t) {
    const auto tag = static_cast<CompressorTag>(t);
    if (CompressorTagName(tag) == lower) return tag;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown compressor '" + name + "'");
}

std::uint64_t CompressorKind::ResolveK(std::size_t d) const {
  if (!IsSparse(tag)) {
    throw Error(ErrorCode::kInvalidArgument, "k is only defined for sparse kinds");
  }
  std::uint64_t k = k_count;
  if (k == 0) {
    const double raw = std::floor(k_fraction * static_cast<double>(d));
    k = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(raw));
  }
  if (k > d) {
    throw Error(ErrorCode::kKTooLarge, "k = " + std::to_string(k) +
                                           " exceeds d = " + std::to_string(d));
  }
  return k;
}

CompressorKind CompressorKind::Resolved(std::size_t d) const {
  CompressorKind out = *this;
  if (IsSparse(tag)) {
    out.k_count = ResolveK(d);
    out.k_fraction = 0.0;
  }
  return out;
}

void CompressorKind::Validate() const {
  if (IsSparse(tag)) {
    if (k_count == 0 && !(k_fraction > 0.0 && k_fraction <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sparse kinds need k >= 1 or a fraction in (0, 1]");
    }
  } else if (k_count != 0 || k_fraction != 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "k set on a non-sparse kind");
  }
  if (IsDither(tag)) {
    CheckDitherBits(bits);
  } else if (bits != 0) {
    throw Error(ErrorCode::kInvalidArgument, "bits set on a non-dither kind");
  }
  if (!IsSparse(tag) && precision != ValuePrecision::kF32) {
    throw Error(ErrorCode::kInvalidArgument,
                "value precision only applies to sparse kinds");
  }
}

std::string CompressorKind::ToString() const {
  std::ostringstream os;
  os << CompressorTagName(tag);
  if (IsSparse(tag)) {
    if (k_count != 0) {
      os << "(k=" << k_count;
    } else {
      os << "(k=" << k_fraction << "d";
    }
    os << (precision == ValuePrecision::kF16 ? ",f16)" : ",f32)");
  } else if (IsDither(tag)) {
    os << "(bits=" << bits << ")";
  }
  return os.str();
}

std::size_t PayloadSize(const CompressorKind& kind, std::size_t d) {
  switch (kind.tag) {
    case CompressorTag::kNone: return 4 * d;
    case CompressorTag::kFp16: return 2 * d;
    case CompressorTag::kScaledSign: return 4 + (d + 7) / 8;
    case CompressorTag::kTopK:
    case CompressorTag::kRandomK: {
      const std::uint64_t k = kind.ResolveK(d);
      return 8 + k * (4 + ValueBytes(kind.precision));
    }
    case CompressorTag::kLinearDither:
    case CompressorTag::kNaturalDither:
      return 4 + (d * static_cast<std::size_t>(kind.bits) + 7) / 8;
  }
  throw Error(ErrorCode::kUnknownCompressorId, "unknown compressor tag");
}

CompressedMessage CompressNone(const GradientVector& x) {
  CompressedMessage msg = NewMessage(CompressorKind::None(), x.size());
  std::uint8_t* p = msg.payload.data();
  for (std::size_t i = 0; i < x.size(); ++i) PutF32(p + 4 * i, x[i]);
  return msg;
}

CompressedMessage CompressFp16(const GradientVector& x) {
  CompressedMessage msg = NewMessage(CompressorKind::Fp16(), x.size());
  std::uint8_t* p = msg.payload.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::uint16_t h = FloatToHalf(x[i]);
    if ((h & 0x7C00u) == 0x7C00u) {
      throw Error(ErrorCode::kNonFinite,
                  "entry " + std::to_string(i) + " overflows fp16");
    }
    PutU16(p + 2 * i, h);
  }
  return msg;
}

CompressedMessage ScaledSign(const GradientVector& x) {
  const std::size_t d = x.size();
  CompressedMessage msg = NewMessage(CompressorKind::ScaledSign(), d);
  const float scale =
      static_cast<float>(L1Norm(x) / static_cast<double>(d));
  PutF32(msg.payload.data(), scale);
  std::uint8_t* bitsp = msg.payload.data() + 4;
  for (std::size_t j = 0; j < d; ++j) {
    if (!(x[j] < 0.0f)) bitsp[j >> 3] |= static_cast<std::uint8_t>(1u << (j & 7));
  }
  return msg;
}

CompressedMessage TopK(const GradientVector& x, std::uint64_t k,
                       ValuePrecision precision) {
  const std::size_t d = x.size();
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (k > d) {
    throw Error(ErrorCode::kKTooLarge, "k = " + std::to_string(k) +
                                           " exceeds d = " + std::to_string(d));
  }
  std::vector<std::uint32_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0u);
  SelectTop(idx, k, x.data());
  return SparseMessage(x, std::move(idx), 1.0, CompressorTag::kTopK, precision);
}

CompressedMessage RandomK(const GradientVector& x, std::uint64_t k,
                          DeterministicRng& rng, ValuePrecision precision) {
  const std::size_t d = x.size();
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (k > d) {
    throw Error(ErrorCode::kKTooLarge, "k = " + std::to_string(k) +
                                           " exceeds d = " + std::to_string(d));
  }
  // Floyd's sampling: k distinct indices, uniformly over all k-subsets.
  std::vector<char> taken(d, 0);
  std::vector<std::uint32_t> idx;
  idx.reserve(k);
  for (std::uint64_t j = d - k; j < d; ++j) {
    std::uint64_t t = rng.NextBelow(j + 1);
    if (taken[t]) t = j;
    taken[t] = 1;
    idx.push_back(static_cast<std::uint32_t>(t));
  }
  const double scale = static_cast<double>(d) / static_cast<double>(k);
  return SparseMessage(x, std::move(idx), scale, CompressorTag::kRandomK,
                       precision);
}

CompressedMessage LinearDither(const GradientVector& x, int bits,
                               DeterministicRng& rng) {
  CheckDitherBits(bits);
  return DitherEncode(CompressorKind::LinearDither(bits), x, rng, 1,
                      LinearLevel{DitherLevels(bits)});
}

CompressedMessage NaturalDither(const GradientVector& x, int bits,
                                DeterministicRng& rng) {
  CheckDitherBits(bits);
  return DitherEncode(CompressorKind::NaturalDither(bits), x, rng, 1,
                      NaturalLevel{DitherLevels(bits)});
}

CompressedMessage Compress(const CompressorKind& kind, const GradientVector& x,
                           DeterministicRng& rng, const CompressOptions& opts) {
  kind.Validate();
  const std::size_t d = x.size();
  switch (kind.tag) {
    case CompressorTag::kNone: return CompressNone(x);
    case CompressorTag::kFp16: return CompressFp16(x);
    case CompressorTag::kScaledSign: {
      if (opts.threads <= 1) return ScaledSign(x);
      CompressedMessage msg = NewMessage(kind, d);
      PutF32(msg.payload.data(),
             static_cast<float>(L1Norm(x) / static_cast<double>(d)));
      std::uint8_t* bitsp = msg.payload.data() + 4;
      detail::ParallelFor(TaskCount(d), opts.threads, [&](std::size_t task) {
        const std::size_t end = std::min(d, (task + 1) * kTaskChunk);
        for (std::size_t j = task * kTaskChunk; j < end; ++j) {
          if (!(x[j] < 0.0f)) bitsp[j >> 3] |= static_cast<std::uint8_t>(1u << (j & 7));
        }
      });
      return msg;
    }
    case CompressorTag::kTopK: {
      const std::uint64_t k = kind.ResolveK(d);
      if (opts.threads <= 1 || TaskCount(d) <= 1) return TopK(x, k, kind.precision);
      // Each task keeps its own top-k; the global top-k is among them.
      const std::size_t tasks = TaskCount(d);
      std::vector<std::vector<std::uint32_t>> local(tasks);
      detail::ParallelFor(tasks, opts.threads, [&](std::size_t task) {
        const std::size_t begin = task * kTaskChunk;
        const std::size_t end = std::min(d, begin + kTaskChunk);
        auto& c = local[task];
        c.resize(end - begin);
        std::iota(c.begin(), c.end(), static_cast<std::uint32_t>(begin));
        SelectTop(c, k, x.data());
      });
      std::vector<std::uint32_t> merged;
      for (auto& c : local) merged.insert(merged.end(), c.begin(), c.end());
      SelectTop(merged, k, x.data());
      return SparseMessage(x, std::move(merged), 1.0, CompressorTag::kTopK,
                           kind.precision);
    }
    case CompressorTag::kRandomK:
      return RandomK(x, kind.ResolveK(d), rng, kind.precision);
    case CompressorTag::kLinearDither:
      return DitherEncode(kind, x, rng, opts.threads,
                          LinearLevel{DitherLevels(kind.bits)});
    case CompressorTag::kNaturalDither:
      return DitherEncode(kind, x, rng, opts.threads,
                          NaturalLevel{DitherLevels(kind.bits)});
  }
  throw Error(ErrorCode::kUnknownCompressorId, "unknown compressor tag");
}

void ValidateMessage(const CompressedMessage& msg) {
  const CompressorKind& kind = msg.kind;
  const std::size_t d = msg.original_len;
  if (d == 0) Malformed("original_len is 0", 0);
  if (d > std::numeric_limits<std::uint32_t>::max()) {
    Malformed("original_len exceeds the 32-bit index range", 0);
  }
  const auto& pl = msg.payload;
  const std::uint8_t* p = pl.data();

  if (IsSparse(kind.tag)) {
    if (pl.size() < 8) Malformed("sparse payload shorter than its k field", pl.size());
    const std::uint64_t k = GetU64(p);
    if (k == 0 || k > d) Malformed("sparse k = " + std::to_string(k) + " out of range", 0);
    if (kind.k_count != k) Malformed("kind k does not match payload k", 0);
  } else if (IsDither(kind.tag)) {
    if (kind.bits < 2 || kind.bits > 8) Malformed("dither bits out of range", 0);
  }
  const std::size_t expected = PayloadSize(kind, d);
  if (pl.size() != expected) {
    Malformed("payload is " + std::to_string(pl.size()) + " bytes, expected " +
                  std::to_string(expected),
              std::min(pl.size(), expected));
  }

  switch (kind.tag) {
    case CompressorTag::kNone:
      for (std::size_t i = 0; i < d; ++i) {
        if (!std::isfinite(GetF32(p + 4 * i))) Malformed("non-finite value", 4 * i);
      }
      break;
    case CompressorTag::kFp16:
      for (std::size_t i = 0; i < d; ++i) {
        if ((GetU16(p + 2 * i) & 0x7C00u) == 0x7C00u) Malformed("non-finite value", 2 * i);
      }
      break;
    case CompressorTag::kScaledSign:
    case CompressorTag::kLinearDither:
    case CompressorTag::kNaturalDither: {
      const float scale = GetF32(p);
      if (!std::isfinite(scale) || scale < 0.0f || std::signbit(scale)) {
        Malformed("scale/norm field is not finite and nonnegative", 0);
      }
      const std::size_t used_bits =
          kind.tag == CompressorTag::kScaledSign ? d : d * kind.bits;
      const std::size_t last = pl.size() - 1;
      if (used_bits % 8 != 0 && (pl[last] >> (used_bits % 8)) != 0) {
        Malformed("nonzero padding bits", last);
      }
      break;
    }
    case CompressorTag::kTopK:
    case CompressorTag::kRandomK: {
      const std::uint64_t k = GetU64(p);
      const std::uint8_t* idx = p + 8;
      const std::uint8_t* val = idx + 4 * k;
      const std::size_t vb = ValueBytes(kind.precision);
      std::int64_t prev = -1;
      for (std::uint64_t i = 0; i < k; ++i) {
        const std::uint32_t j = GetU32(idx + 4 * i);
        if (j >= d) Malformed("index " + std::to_string(j) + " >= d", 8 + 4 * i);
        if (static_cast<std::int64_t>(j) <= prev) {
          Malformed("indices not strictly increasing", 8 + 4 * i);
        }
        prev = j;
        if (!std::isfinite(LoadValue(val + vb * i, kind.precision))) {
          Malformed("non-finite value", 8 + 4 * k + vb * i);
        }
      }
      break;
    }
  }
}

GradientVector Decompress(const CompressedMessage& msg,
                          const CompressOptions& opts) {
  ValidateMessage(msg);
  const std::size_t d = msg.original_len;
  const std::uint8_t* p = msg.payload.data();
  std::vector<float> out(d, 0.0f);
  switch (msg.kind.tag) {
    case CompressorTag::kNone:
      for (std::size_t i = 0; i < d; ++i) out[i] = GetF32(p + 4 * i);
      break;
    case CompressorTag::kFp16:
      for (std::size_t i = 0; i < d; ++i) out[i] = HalfToFloat(GetU16(p + 2 * i));
      break;
    case CompressorTag::kScaledSign: {
      const float scale = GetF32(p);
      const std::uint8_t* bitsp = p + 4;
      detail::ParallelFor(TaskCount(d), opts.threads, [&](std::size_t task) {
        const std::size_t end = std::min(d, (task + 1) * kTaskChunk);
        for (std::size_t j = task * kTaskChunk; j < end; ++j) {
          out[j] = ((bitsp[j >> 3] >> (j & 7)) & 1u) ? scale : -scale;
        }
      });
      break;
    }
    case CompressorTag::kTopK:
    case CompressorTag::kRandomK: {
      const std::uint64_t k = GetU64(p);
      const std::uint8_t* idx = p + 8;
      const std::uint8_t* val = idx + 4 * k;
      const std::size_t vb = ValueBytes(msg.kind.precision);
      for (std::uint64_t i = 0; i < k; ++i) {
        out[GetU32(idx + 4 * i)] = LoadValue(val + vb * i, msg.kind.precision);
      }
      break;
    }
    case CompressorTag::kLinearDither:
    case CompressorTag::kNaturalDither: {
      const double norm = GetF32(p);
      const std::uint8_t* codes = p + 4;
      const int bits = msg.kind.bits;
      const bool linear = msg.kind.tag == CompressorTag::kLinearDither;
      const double s = DitherLevels(bits);
      detail::ParallelFor(TaskCount(d), opts.threads, [&](std::size_t task) {
        const std::size_t end = std::min(d, (task + 1) * kTaskChunk);
        for (std::size_t j = task * kTaskChunk; j < end; ++j) {
          const std::uint32_t code = GetCode(codes, j, bits);
          const std::uint32_t field = code >> 1;
          double mag = 0.0;
          if (linear) {
            mag = norm * static_cast<double>(field) / s;
          } else if (field != 0) {
            mag = std::ldexp(norm, -static_cast<int>(field - 1));
          }
          out[j] = static_cast<float>((code & 1u) ? -mag : mag);
        }
      });
      break;
    }
  }
  for (float v : out) {
    if (!std::isfinite(v)) Malformed("decoded value is not finite", 0);
  }
  return GradientVector(std::move(out));
}

std::vector<std::uint32_t> SparseIndices(const CompressedMessage& msg) {
  if (!IsSparse(msg.kind.tag)) {
    throw Error(ErrorCode::kUnsupportedKind, "not a sparse message");
  }
  if (msg.payload.size() < 8) Malformed("sparse payload too short", 0);
  const std::uint64_t k = GetU64(msg.payload.data());
  if (msg.payload.size() < 8 + 4 * k) Malformed("sparse payload too short", msg.payload.size());
  std::vector<std::uint32_t> out(k);
  for (std::uint64_t i = 0; i < k; ++i) out[i] = GetU32(msg.payload.data() + 8 + 4 * i);
  return out;
}

float MessageScale(const CompressedMessage& msg) {
  if (msg.kind.tag != CompressorTag::kScaledSign && !IsDither(msg.kind.tag)) {
    throw Error(ErrorCode::kUnsupportedKind, "message has no scale field");
  }
  if (msg.payload.size() < 4) Malformed("payload too short", 0);
  return GetF32(msg.payload.data());
}

GradientVector NaiveErrorUpdate(const GradientVector& q,
                                const CompressedMessage& msg) {
  return Subtract(q, Decompress(msg));
}

bool SupportsFusedErrorUpdate(const CompressedMessage& msg) {
  if (msg.kind.precision != ValuePrecision::kF32) return false;
  if (msg.kind.tag == CompressorTag::kTopK) return true;
  return msg.kind.tag == CompressorTag::kRandomK &&
         msg.kind.k_count == msg.original_len;
}

GradientVector FusedErrorUpdate(const GradientVector& q,
                                const CompressedMessage& msg) {
  if (!SupportsFusedErrorUpdate(msg)) {
    throw Error(ErrorCode::kUnsupportedKind,
                "fused error update needs an unscaled F32 sparse message, got " +
                    msg.kind.ToString());
  }
  if (q.size() != msg.original_len) {
    throw Error(ErrorCode::kLengthMismatch, "q and message lengths differ");
  }
  std::vector<float> e(q.values().begin(), q.values().end());
  const std::uint8_t* p = msg.payload.data();
  const std::uint64_t k = GetU64(p);
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint32_t j = GetU32(p + 8 + 4 * i);
    if (j >= e.size()) Malformed("index out of range", 8 + 4 * i);
    e[j] = 0.0f;
  }
  return GradientVector(std::move(e));
}

double DeltaLowerBound(const CompressorKind& kind, const GradientVector& x) {
  const double sq = SquaredL2Norm(x.values());
  if (sq == 0.0) throw Error(ErrorCode::kZeroVector, "delta undefined for x = 0");
  const double d = static_cast<double>(x.size());
  switch (kind.tag) {
    case CompressorTag::kScaledSign: {
      const double l1 = L1Norm(x);
      return std::min(1.0, l1 * l1 / (d * sq));
    }
    case CompressorTag::kTopK:
      return static_cast<double>(kind.ResolveK(x.size())) / d;
    default:
      throw Error(ErrorCode::kUnsupportedKind,
                  "no delta certificate for " + kind.ToString());
  }
}

OmegaEstimate EmpiricalOmega(const CompressorKind& kind,
                             const GradientVector& x, std::size_t trials,
                             const DeterministicRng& rng) {
  if (!IsUnbiased(kind.tag)) {
    throw Error(ErrorCode::kUnsupportedKind,
                "empirical omega needs an unbiased kind, got " + kind.ToString());
  }
  const double sq = SquaredL2Norm(x.values());
  if (sq == 0.0) throw Error(ErrorCode::kZeroVector, "omega undefined for x = 0");
  if (trials == 0) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  const std::size_t d = x.size();
  std::vector<double> mean(d, 0.0);
  double err_sum = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    DeterministicRng stream = rng.Derive({0, t, 0, StreamStage::kTrial});
    const GradientVector c = Decompress(Compress(kind, x, stream));
    double err = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] += c[j];
      const double diff = static_cast<double>(c[j]) - x[j];
      err += diff * diff;
    }
    err_sum += err;
  }
  double bias = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = mean[j] / static_cast<double>(trials) - x[j];
    bias += diff * diff;
  }
  return {std::sqrt(bias), err_sum / static_cast<double>(trials) / sq};
}

}  // namespace gradcomp
