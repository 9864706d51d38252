#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mrsgen/model.hpp"

namespace mrsgen::model {

namespace {

constexpr char kMagic[8] = {'M', 'R', 'S', 'G', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

std::string hash_hex(uint64_t h) {
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

nlohmann::json hyperparams_json(const Hyperparams& hp) {
  return nlohmann::json{{"symbol_embed", hp.symbol_embed},
                        {"bundle_embed", hp.bundle_embed},
                        {"target_embed", hp.target_embed},
                        {"hidden", hp.hidden},
                        {"encoder_layers", hp.encoder_layers},
                        {"decoder_layers", hp.decoder_layers},
                        {"dropout", hp.dropout},
                        {"learning_rate", hp.learning_rate},
                        {"beta1", hp.beta1},
                        {"beta2", hp.beta2},
                        {"adam_eps", hp.adam_eps},
                        {"clip_norm", hp.clip_norm},
                        {"batch_size", hp.batch_size},
                        {"max_epochs", hp.max_epochs},
                        {"beam_width", hp.beam_width},
                        {"max_decode_len", hp.max_decode_len},
                        {"use_copy", hp.use_copy},
                        {"seed", hp.seed}};
}

Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams hp;
  hp.symbol_embed = j.at("symbol_embed").get<int>();
  hp.bundle_embed = j.at("bundle_embed").get<int>();
  hp.target_embed = j.at("target_embed").get<int>();
  hp.hidden = j.at("hidden").get<int>();
  hp.encoder_layers = j.at("encoder_layers").get<int>();
  hp.decoder_layers = j.at("decoder_layers").get<int>();
  hp.dropout = j.at("dropout").get<double>();
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.beta1 = j.at("beta1").get<double>();
  hp.beta2 = j.at("beta2").get<double>();
  hp.adam_eps = j.at("adam_eps").get<double>();
  hp.clip_norm = j.at("clip_norm").get<double>();
  hp.batch_size = j.at("batch_size").get<int>();
  hp.max_epochs = j.at("max_epochs").get<int>();
  hp.beam_width = j.at("beam_width").get<int>();
  hp.max_decode_len = j.at("max_decode_len").get<int>();
  hp.use_copy = j.at("use_copy").get<bool>();
  hp.seed = j.at("seed").get<uint64_t>();
  return hp;
}

}  // namespace

void save_checkpoint(const Seq2Seq& model, const std::string& path) {
  nlohmann::json header;
  header["hyperparams"] = hyperparams_json(model.hyperparams());
  header["vocab_hash"] = {{"symbols", hash_hex(model.symbols_hash())},
                          {"bundles", hash_hex(model.bundles_hash())},
                          {"target", hash_hex(model.target_hash())}};
  nlohmann::json tensors = nlohmann::json::array();
  for (const Tensor& t : model.tensors()) {
    tensors.push_back({{"name", t.name},
                       {"rows", t.w.rows()},
                       {"cols", t.w.cols()}});
  }
  header["tensors"] = tensors;
  std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  uint64_t len = header_bytes.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_bytes.data(), static_cast<std::streamsize>(len));
  for (const Tensor& t : model.tensors()) {
    out.write(reinterpret_cast<const char*>(t.w.data()),
              static_cast<std::streamsize>(t.w.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("short write: " + path);
}

Seq2Seq load_checkpoint(const std::string& path,
                        const corpus::Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file: " + path);
  }
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_bytes(len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("truncated checkpoint header");
  nlohmann::json header = nlohmann::json::parse(header_bytes);

  const nlohmann::json& hashes = header.at("vocab_hash");
  if (hashes.at("symbols").get<std::string>() !=
          hash_hex(vocab.symbols.content_hash()) ||
      hashes.at("bundles").get<std::string>() !=
          hash_hex(vocab.bundles.content_hash()) ||
      hashes.at("target").get<std::string>() !=
          hash_hex(vocab.target.content_hash())) {
    throw CheckpointError(
        "vocabulary hash mismatch: checkpoint was trained with a different "
        "vocabulary");
  }

  Seq2Seq model(hyperparams_from_json(header.at("hyperparams")), vocab);
  const nlohmann::json& tensors = header.at("tensors");
  if (tensors.size() != model.tensors().size()) {
    throw CheckpointError("tensor count mismatch");
  }
  for (size_t i = 0; i < model.tensors().size(); ++i) {
    Tensor& t = model.tensors()[i];
    const nlohmann::json& meta = tensors[i];
    if (meta.at("name").get<std::string>() != t.name ||
        meta.at("rows").get<long>() != t.w.rows() ||
        meta.at("cols").get<long>() != t.w.cols()) {
      throw CheckpointError("tensor layout mismatch at " + t.name);
    }
    in.read(reinterpret_cast<char*>(t.w.data()),
            static_cast<std::streamsize>(t.w.size() * sizeof(double)));
  }
  if (!in) throw CheckpointError("truncated checkpoint tensors");
  return model;
}

}  // namespace mrsgen::model
