#include <cstring>
#include <fstream>
#include <sstream>

#include "core/gnn.hpp"
#include "json.hpp"

namespace gpf {

using nlohmann::json;

namespace {

constexpr const char* kB64 =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (size_t i = 0; i < len; i += 3) {
    unsigned v = data[i] << 16;
    if (i + 1 < len) v |= data[i + 1] << 8;
    if (i + 2 < len) v |= data[i + 2];
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(i + 1 < len ? kB64[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? kB64[v & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw ValidationError("corrupt checkpoint: bad base64 length");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    unsigned v = 0;
    for (int k = 0; k < 4; ++k) {
      char c = text[i + k];
      if (c == '=') {
        ++pad;
        v <<= 6;
      } else {
        int d = val(c);
        if (d < 0 || pad > 0) throw ValidationError("corrupt checkpoint: bad base64 character");
        v = (v << 6) | static_cast<unsigned>(d);
      }
    }
    out.push_back((v >> 16) & 0xff);
    if (pad < 2) out.push_back((v >> 8) & 0xff);
    if (pad < 1) out.push_back(v & 0xff);
  }
  return out;
}

// Little-endian 64-bit floats. This codebase only targets little-endian
// hosts; a byte swap would go here otherwise.
std::string encode_doubles(const std::vector<double>& values) {
  return base64_encode(reinterpret_cast<const unsigned char*>(values.data()),
                       values.size() * sizeof(double));
}

std::vector<double> decode_doubles(const std::string& text, size_t expected) {
  std::vector<unsigned char> bytes = base64_decode(text);
  if (bytes.size() != expected * sizeof(double))
    throw ValidationError("corrupt checkpoint: parameter array length disagrees with header dims");
  std::vector<double> out(expected);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

json linear_header(const LinearUpdate& lin) {
  json h;
  h["dims"] = json::array({lin.weight.rows(), lin.weight.cols()});
  h["bias"] = lin.bias.has_value();
  return h;
}

LinearUpdate linear_from_header(const json& h, const json& params, const std::string& prefix) {
  int in = h.at("dims").at(0).get<int>();
  int out = h.at("dims").at(1).get<int>();
  if (in < 1 || out < 1) throw ValidationError("corrupt checkpoint: non-positive dims");
  LinearUpdate lin;
  lin.weight = Matrix(in, out);
  lin.weight.data() =
      decode_doubles(params.at(prefix + ".weight").get<std::string>(), static_cast<size_t>(in) * out);
  if (h.at("bias").get<bool>()) {
    lin.bias = Matrix(1, out);
    lin.bias->data() = decode_doubles(params.at(prefix + ".bias").get<std::string>(), out);
  }
  return lin;
}

}  // namespace

void save_checkpoint(const GnnModel& m, const std::string& path) {
  validate_model(m);
  json doc;
  doc["version"] = 1;
  json layers = json::array();
  json params;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    std::string key = "layer" + std::to_string(i);
    json h;
    h["kind"] = l.kind == LayerKind::gin ? "gin" : "gcn";
    h["dims"] = json::array({l.in_dim(), l.out_dim()});
    if (l.kind == LayerKind::gin) h["epsilon"] = l.epsilon;
    if (const auto* lin = std::get_if<LinearUpdate>(&l.update)) {
      h["update"] = "linear";
      h["bias"] = lin->bias.has_value();
      params[key + ".weight"] = encode_doubles(lin->weight.data());
      if (lin->bias) params[key + ".bias"] = encode_doubles(lin->bias->data());
    } else {
      const auto& mlp = std::get<MlpUpdate>(l.update);
      h["update"] = "mlp";
      h["bias"] = mlp.first.bias.has_value();
      params[key + ".w0"] = encode_doubles(mlp.first.weight.data());
      if (mlp.first.bias) params[key + ".b0"] = encode_doubles(mlp.first.bias->data());
      params[key + ".w1"] = encode_doubles(mlp.second.weight.data());
      if (mlp.second.bias) params[key + ".b1"] = encode_doubles(mlp.second.bias->data());
    }
    layers.push_back(std::move(h));
  }
  doc["layers"] = std::move(layers);
  doc["readout"] = m.readout == Readout::sum ? "sum" : "mean";
  doc["activation"] = m.activation == Activation::relu ? "relu" : "none";
  json head = json::array();
  for (size_t i = 0; i < m.head.layers.size(); ++i) {
    head.push_back(linear_header(m.head.layers[i]));
    std::string prefix = "head." + std::to_string(i);
    params[prefix + ".weight"] = encode_doubles(m.head.layers[i].weight.data());
    if (m.head.layers[i].bias) params[prefix + ".bias"] = encode_doubles(m.head.layers[i].bias->data());
  }
  doc["head"] = std::move(head);
  doc["params"] = std::move(params);
  doc["frozen"] = m.frozen;

  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint file: " + path);
  out << doc.dump() << "\n";
  if (!out) throw IoError("write failed: " + path);
}

GnnModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  json doc = json::parse(buf.str(), nullptr, false);
  if (doc.is_discarded()) throw ValidationError("corrupt checkpoint: malformed JSON in " + path);
  try {
    if (!doc.contains("version") || doc.at("version").get<int>() != 1)
      throw ValidationError("incompatible checkpoint: expected version 1");
    const json& params = doc.at("params");
    GnnModel m;
    m.readout = doc.at("readout").get<std::string>() == "mean" ? Readout::mean : Readout::sum;
    m.activation =
        doc.at("activation").get<std::string>() == "none" ? Activation::none : Activation::relu;
    int idx = 0;
    for (const json& h : doc.at("layers")) {
      std::string key = "layer" + std::to_string(idx++);
      LayerSpec l;
      l.kind = h.at("kind").get<std::string>() == "gcn" ? LayerKind::gcn : LayerKind::gin;
      if (h.contains("epsilon")) l.epsilon = h.at("epsilon").get<double>();
      int in_dim = h.at("dims").at(0).get<int>();
      int out_dim = h.at("dims").at(1).get<int>();
      if (in_dim < 1 || out_dim < 1) throw ValidationError("corrupt checkpoint: non-positive dims");
      std::string update = h.at("update").get<std::string>();
      bool bias = h.at("bias").get<bool>();
      if (update == "linear") {
        LinearUpdate lin;
        lin.weight = Matrix(in_dim, out_dim);
        lin.weight.data() = decode_doubles(params.at(key + ".weight").get<std::string>(),
                                           static_cast<size_t>(in_dim) * out_dim);
        if (bias) {
          lin.bias = Matrix(1, out_dim);
          lin.bias->data() = decode_doubles(params.at(key + ".bias").get<std::string>(), out_dim);
        }
        l.update = std::move(lin);
      } else if (update == "mlp") {
        MlpUpdate mlp;
        mlp.first.weight = Matrix(in_dim, out_dim);
        mlp.first.weight.data() = decode_doubles(params.at(key + ".w0").get<std::string>(),
                                                 static_cast<size_t>(in_dim) * out_dim);
        mlp.second.weight = Matrix(out_dim, out_dim);
        mlp.second.weight.data() = decode_doubles(params.at(key + ".w1").get<std::string>(),
                                                  static_cast<size_t>(out_dim) * out_dim);
        if (bias) {
          mlp.first.bias = Matrix(1, out_dim);
          mlp.first.bias->data() = decode_doubles(params.at(key + ".b0").get<std::string>(), out_dim);
          mlp.second.bias = Matrix(1, out_dim);
          mlp.second.bias->data() = decode_doubles(params.at(key + ".b1").get<std::string>(), out_dim);
        }
        l.update = std::move(mlp);
      } else {
        throw ValidationError("corrupt checkpoint: unknown update kind \"" + update + "\"");
      }
      m.layers.push_back(std::move(l));
    }
    int hidx = 0;
    for (const json& h : doc.at("head")) {
      m.head.layers.push_back(linear_from_header(h, params, "head." + std::to_string(hidx)));
      ++hidx;
    }
    if (doc.contains("frozen")) m.frozen = doc.at("frozen").get<std::map<std::string, bool>>();
    validate_model(m);
    return m;
  } catch (const json::exception& e) {
    throw ValidationError("corrupt checkpoint " + path + ": " + e.what());
  }
}

}  // namespace gpf
