#include "tagforge/core.hpp"

#include <openssl/evp.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>

#include "tagforge/error.hpp"

namespace tagforge {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "IOFailure";
    case ErrorCode::kEmptyDocument: return "EmptyDocument";
    case ErrorCode::kMissingTaggedChunk: return "MissingTaggedChunk";
    case ErrorCode::kInvalidCategoryName: return "InvalidCategoryName";
    case ErrorCode::kInvalidSpan: return "InvalidSpan";
    case ErrorCode::kOverlapUnresolvable: return "OverlapUnresolvable";
    case ErrorCode::kTemplateSlotMissing: return "TemplateSlotMissing";
    case ErrorCode::kUnparseableOutput: return "UnparseableOutput";
    case ErrorCode::kBridgeUnavailable: return "BridgeUnavailable";
    case ErrorCode::kProtocolError: return "ProtocolError";
    case ErrorCode::kMappingMissing: return "MappingMissing";
    case ErrorCode::kChunkMismatch: return "ChunkMismatch";
    case ErrorCode::kInvalidRequest: return "InvalidRequest";
    case ErrorCode::kAuthError: return "AuthError";
    case ErrorCode::kThrottled: return "Throttled";
    case ErrorCode::kTransportError: return "TransportError";
    case ErrorCode::kContextWindowExceeded: return "ContextWindowExceeded";
    case ErrorCode::kFixtureMiss: return "FixtureMiss";
    case ErrorCode::kStoreCorrupt: return "StoreCorrupt";
    case ErrorCode::kCorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::kNeedleCollision: return "NeedleCollision";
    case ErrorCode::kZeroShortAccuracy: return "ZeroShortAccuracy";
  }
  return "Unknown";
}

std::string Digest256::hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

Digest256 Digest256::from_hex(std::string_view hex) {
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(ErrorCode::kInvalidArgument, "bad hex digit in digest: " + std::string(hex));
  };
  if (hex.size() != 64) {
    throw Error(ErrorCode::kInvalidArgument, "digest must be 64 hex characters: " + std::string(hex));
  }
  Digest256 d;
  for (std::size_t i = 0; i < 32; ++i) {
    d.bytes[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return d;
}

Digest256 sha256(std::string_view bytes) {
  Digest256 d;
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), d.bytes.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != d.bytes.size()) {
    throw Error(ErrorCode::kInvalidArgument, "sha256 digest failed");
  }
  return d;
}

std::string normalize(std::string_view text) {
  std::string folded;
  folded.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r') {
      folded.push_back('\n');
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
    } else {
      folded.push_back(text[i]);
    }
  }

  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorCode::kInvalidArgument, "ICU NFC normalizer unavailable");
  icu::UnicodeString source = icu::UnicodeString::fromUTF8(folded);
  icu::UnicodeString composed = nfc->normalize(source, status);
  if (U_FAILURE(status)) throw Error(ErrorCode::kInvalidArgument, "NFC normalization failed");

  int32_t begin = 0;
  int32_t end = composed.length();
  while (begin < end) {
    UChar32 c = composed.char32At(begin);
    if (!u_isUWhiteSpace(c)) break;
    begin += U16_LENGTH(c);
  }
  while (end > begin) {
    int32_t prev = composed.moveIndex32(end, -1);
    if (!u_isUWhiteSpace(composed.char32At(prev))) break;
    end = prev;
  }
  std::string out;
  composed.tempSubStringBetween(begin, end).toUTF8String(out);
  return out;
}

Digest256 content_hash(std::string_view text) { return sha256(normalize(text)); }

namespace {

// Length of the UTF-8 sequence starting at lead byte, or 0 if not a lead byte.
int sequence_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if (lead >= 0xC2 && lead <= 0xDF) return 2;
  if (lead >= 0xE0 && lead <= 0xEF) return 3;
  if (lead >= 0xF0 && lead <= 0xF4) return 4;
  return 0;
}

}  // namespace

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    auto lead = static_cast<unsigned char>(text[i]);
    int len = sequence_length(lead);
    if (len == 0 || i + len > text.size()) return false;
    for (int k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) return false;
    }
    if (len >= 3) {
      auto second = static_cast<unsigned char>(text[i + 1]);
      if (lead == 0xE0 && second < 0xA0) return false;  // overlong
      if (lead == 0xED && second > 0x9F) return false;  // surrogates
      if (lead == 0xF0 && second < 0x90) return false;  // overlong
      if (lead == 0xF4 && second > 0x8F) return false;  // > U+10FFFF
    }
    i += static_cast<std::size_t>(len);
  }
  return true;
}

bool is_char_boundary(std::string_view text, std::size_t offset) {
  if (offset == 0 || offset == text.size()) return true;
  if (offset > text.size()) return false;
  return (static_cast<unsigned char>(text[offset]) & 0xC0) != 0x80;
}

std::size_t codepoint_count(std::string_view text) {
  return static_cast<std::size_t>(std::count_if(text.begin(), text.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

bool is_valid_category_name(std::string_view name) {
  if (name.empty()) return false;
  auto alpha = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  if (!alpha(name.front())) return false;
  return std::all_of(name.begin(), name.end(),
                     [&](char c) { return alpha(c) || digit(c) || c == '_'; });
}

CategorySet::CategorySet(std::vector<TagCategory> categories) : categories_(std::move(categories)) {
  std::set<std::string> seen;
  for (const auto& c : categories_) {
    if (!is_valid_category_name(c.name)) {
      throw Error(ErrorCode::kInvalidCategoryName, "'" + c.name + "'");
    }
    if (!seen.insert(c.name).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate category name '" + c.name + "'");
    }
  }
}

std::set<std::string> CategorySet::names() const {
  std::set<std::string> out;
  for (const auto& c : categories_) out.insert(c.name);
  return out;
}

bool CategorySet::contains(std::string_view name) const {
  return std::any_of(categories_.begin(), categories_.end(),
                     [&](const TagCategory& c) { return c.name == name; });
}

void sort_spans(std::vector<TagSpan>& spans) {
  std::sort(spans.begin(), spans.end(), [](const TagSpan& a, const TagSpan& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.end != b.end) return a.end > b.end;
    return a.category < b.category;
  });
  spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
}

bool spans_well_formed(std::string_view text, const std::vector<TagSpan>& spans) {
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > text.size()) return false;
    if (!is_char_boundary(text, s.start) || !is_char_boundary(text, s.end)) return false;
  }
  for (std::size_t i = 0; i < spans.size(); ++i) {
    for (std::size_t j = i + 1; j < spans.size(); ++j) {
      const auto& a = spans[i];
      const auto& b = spans[j];
      bool disjoint = a.end <= b.start || b.end <= a.start;
      bool nested = (a.start <= b.start && b.end <= a.end) || (b.start <= a.start && a.end <= b.end);
      if (!disjoint && !nested) return false;
    }
  }
  return true;
}

}  // namespace tagforge
