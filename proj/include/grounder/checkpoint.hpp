//
// Copyright 2026 The Grounder Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef GROUNDER_CHECKPOINT_HPP
#define GROUNDER_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/model.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Checkpoint: magic, a config echo (flat key-value text including the init
// seed and a lexicon hash), then the named parameter blocks in creation
// order with raw scalar payloads. save→load→save is byte-identical.
// ---------------------------------------------------------------------------

inline constexpr char kCkptMagic[8] = {'G', 'R', 'C', 'K', 'P', 'T', '0', '1'};

namespace ckptdetail {

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U take(const std::string& in, std::size_t& off) {
  if (off + sizeof(U) > in.size()) throw ParseError("checkpoint: truncated file");
  U v;
  std::memcpy(&v, in.data() + off, sizeof(U));
  off += sizeof(U);
  return v;
}

}  // namespace ckptdetail

template <Real T>
std::string checkpoint_bytes(const IrvgModel<T>& model) {
  using namespace ckptdetail;
  std::vector<std::pair<std::string, std::string>> kv;
  serialize_model_config(model.cfg, kv);
  kv.emplace_back("seed", std::to_string(model.seed()));
  std::string lex_text = model.lex.serialize();
  kv.emplace_back("lexicon_hash", hex64(fnv1a64(lex_text.data(), lex_text.size())));
  std::string config;
  for (const auto& [k, v] : kv) config += k + " = " + v + "\n";

  std::string out;
  out.append(kCkptMagic, 8);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  put<std::uint8_t>(out, static_cast<std::uint8_t>(sizeof(T)));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& name : model.params.names()) {
    const Tensor<T>& t = model.params.get(name)->val;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.ndim()));
    for (int d = 0; d < t.ndim(); ++d)
      put<std::int32_t>(out, static_cast<std::int32_t>(t.dim(d)));
    out.append(reinterpret_cast<const char*>(t.data()),
               sizeof(T) * static_cast<std::size_t>(t.numel()));
  }
  return out;
}

template <Real T>
void save_checkpoint(const std::string& path, const IrvgModel<T>& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write checkpoint: " + path);
  std::string bytes = checkpoint_bytes(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("checkpoint write failed: " + path);
}

struct CheckpointHeader {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::string lexicon_hash;
  std::size_t params_offset = 0;  // into the raw bytes
};

inline CheckpointHeader parse_checkpoint_header(const std::string& bytes) {
  using namespace ckptdetail;
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCkptMagic, 8) != 0)
    throw ParseError("checkpoint: bad magic");
  std::size_t off = 8;
  const auto config_len = take<std::uint32_t>(bytes, off);
  if (off + config_len > bytes.size()) throw ParseError("checkpoint: truncated config");
  std::string config_text = bytes.substr(off, config_len);
  off += config_len;
  CheckpointHeader h;
  bool seen_seed = false;
  for (const auto& [k, v] : parse_kv_text(config_text)) {
    if (k == "seed") {
      h.seed = std::stoull(v);
      seen_seed = true;
    } else if (k == "lexicon_hash") {
      h.lexicon_hash = v;
    } else if (!apply_model_config_key(h.config, k, v)) {
      throw ParseError("checkpoint: unknown config key " + k);
    }
  }
  if (!seen_seed) throw ParseError("checkpoint: missing seed");
  h.params_offset = off;
  return h;
}

// Rebuilds the model from the stored config/seed and overwrites its
// parameters with the stored blocks (names and shapes must match exactly).
template <Real T>
IrvgModel<T> load_checkpoint(const std::string& path, const Lexicon& lexicon) {
  using namespace ckptdetail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  CheckpointHeader h = parse_checkpoint_header(bytes);
  std::string lex_text = lexicon.serialize();
  if (h.lexicon_hash != hex64(fnv1a64(lex_text.data(), lex_text.size())))
    throw ValidationError("checkpoint: lexicon mismatch");

  IrvgModel<T> model(h.config, lexicon, h.seed);
  std::size_t off = h.params_offset;
  const auto scalar_size = take<std::uint8_t>(bytes, off);
  if (scalar_size != sizeof(T))
    throw ParseError("checkpoint: scalar width mismatch");
  const auto n_params = take<std::uint32_t>(bytes, off);
  if (n_params != model.params.size())
    throw ParseError("checkpoint: parameter count mismatch");
  for (const auto& name : model.params.names()) {
    const auto name_len = take<std::uint32_t>(bytes, off);
    if (off + name_len > bytes.size()) throw ParseError("checkpoint: truncated name");
    std::string stored(bytes, off, name_len);
    off += name_len;
    if (stored != name)
      throw ParseError("checkpoint: parameter order mismatch at " + stored);
    Tensor<T>& t = model.params.get(name)->val;
    const auto ndim = take<std::uint8_t>(bytes, off);
    if (ndim != t.ndim()) throw ParseError("checkpoint: rank mismatch at " + name);
    for (int d = 0; d < t.ndim(); ++d) {
      const auto dim = take<std::int32_t>(bytes, off);
      if (dim != t.dim(d)) throw ParseError("checkpoint: shape mismatch at " + name);
    }
    const std::size_t payload = sizeof(T) * static_cast<std::size_t>(t.numel());
    if (off + payload > bytes.size()) throw ParseError("checkpoint: truncated payload");
    std::memcpy(t.data(), bytes.data() + off, payload);
    off += payload;
  }
  if (off != bytes.size()) throw ParseError("checkpoint: trailing bytes");
  return model;
}

// FNV hash over all parameter payloads in order; used by determinism checks.
template <Real T>
std::uint64_t param_checksum(const IrvgModel<T>& model) {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& name : model.params.names()) {
    const Tensor<T>& t = model.params.get(name)->val;
    h = fnv1a64(t.data(), sizeof(T) * static_cast<std::size_t>(t.numel()), h);
  }
  return h;
}

}  // namespace grounder

#endif  // GROUNDER_CHECKPOINT_HPP
