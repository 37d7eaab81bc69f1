// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/model_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace ecnn {

using nlohmann::json;

namespace {

json layer_json(const LayerSpec& l) {
  return json{{"kind", to_string(l.kind)},
              {"in", l.in_ch},
              {"out", l.out_ch},
              {"expand", l.expand},
              {"level", l.scale_level},
              {"act", l.act == Activation::ReLU ? "relu" : "none"},
              {"pool", to_string(l.pool)},
              {"skip", l.skip_from}};
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec l;
  l.kind = parse_layer_kind(j.at("kind").get<std::string>());
  l.in_ch = j.at("in").get<int>();
  l.out_ch = j.at("out").get<int>();
  l.expand = j.value("expand", 1);
  l.scale_level = j.value("level", 0);
  const std::string act = j.value("act", "none");
  if (act != "relu" && act != "none") throw Error("unknown activation '" + act + "'");
  l.act = act == "relu" ? Activation::ReLU : Activation::None;
  l.pool = parse_pool(j.value("pool", "none"));
  l.skip_from = j.value("skip", -1);
  return l;
}

json model_json(const ModelIR& m) {
  json j{{"format", "ecnnkit-model"}, {"version", kModelFileVersion}, {"name", m.name},
         {"family", to_string(m.family)}, {"B", m.B}, {"R", m.R}, {"N", m.N}, {"channels", m.channels}};
  j["layers"] = json::array();
  for (const auto& l : m.layers) j["layers"].push_back(layer_json(l));
  return j;
}

ModelIR model_from(const json& j) {
  if (j.value("format", "") != "ecnnkit-model") throw Error("not an ecnnkit model document");
  if (j.value("version", 0) != kModelFileVersion)
    throw Error("unsupported model document version " + std::to_string(j.value("version", 0)));
  ModelIR m;
  m.name = j.value("name", "model");
  m.family = parse_family(j.value("family", "custom"));
  m.B = j.value("B", 0);
  m.R = j.value("R", 0);
  m.N = j.value("N", 0);
  m.channels = j.value("channels", kHwChannels);
  for (const auto& lj : j.at("layers")) m.layers.push_back(layer_from_json(lj));
  validate_model(m);
  return m;
}

std::filesystem::path blob_path(const std::filesystem::path& p) {
  std::filesystem::path b = p;
  b.replace_extension(".bin");
  return b;
}

}  // namespace

std::string model_to_json(const ModelIR& m) { return model_json(m).dump(2); }

ModelIR model_from_json(const std::string& text) {
  try {
    return model_from(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(std::string("model document: ") + e.what());
  }
}

void save_model(const std::string& path, const ModelFile& f) {
  check_weights(f.model, f.weights);
  json j = model_json(f.model);
  const auto blob = blob_path(path);
  j["blob"] = blob.filename().string();
  j["input_format"] = f.input_fmt.to_string();
  std::vector<float> data;
  auto put = [&](const std::vector<float>& v) {
    json ref = json::array({data.size(), v.size()});
    data.insert(data.end(), v.begin(), v.end());
    return ref;
  };
  for (std::size_t i = 0; i < f.model.layers.size(); ++i) {
    json& lj = j["layers"][i];
    const LayerWeights& lw = f.weights.layers[i];
    lj["params"] = json{{"w", put(lw.w)}, {"b", put(lw.b)}, {"w2", put(lw.w2)}, {"b2", put(lw.b2)}};
    if (f.formats) {
      const LayerFormats& q = (*f.formats)[i];
      lj["q"] = json{{"w", q.w.to_string()}, {"b", q.b.to_string()}, {"out", q.out.to_string()}};
      if (q.mid) lj["q"]["mid"] = q.mid->to_string();
    }
  }
  std::ofstream doc(path);
  if (!doc) throw Error("cannot write " + path);
  doc << j.dump(2) << "\n";
  std::ofstream bin(blob, std::ios::binary);
  if (!bin) throw Error("cannot write " + blob.string());
  for (float x : data) {
    uint32_t u;
    std::memcpy(&u, &x, 4);
    const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
    bin.write(reinterpret_cast<const char*>(b), 4);
  }
}

ModelFile load_model(const std::string& path) {
  std::ifstream doc(path);
  if (!doc) throw Error("cannot open " + path);
  json j;
  try {
    j = json::parse(doc);
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  ModelFile f;
  f.model = model_from(j);
  f.input_fmt = QFormat::parse(j.value("input_format", "UQ8"));
  const auto blob = std::filesystem::path(path).parent_path() / j.value("blob", blob_path(path).filename().string());
  std::ifstream bin(blob, std::ios::binary);
  if (!bin) throw Error("cannot open weight blob " + blob.string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (raw.size() % 4 != 0) throw Error("weight blob is not a whole number of float32 values");
  std::vector<float> data(raw.size() / 4);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const uint32_t u = raw[4 * i] | (raw[4 * i + 1] << 8) | (raw[4 * i + 2] << 16) | (uint32_t{raw[4 * i + 3]} << 24);
    std::memcpy(&data[i], &u, 4);
  }
  auto get = [&](const json& ref) {
    const std::size_t off = ref.at(0).get<std::size_t>(), len = ref.at(1).get<std::size_t>();
    if (off + len > data.size()) throw Error("parameter reference outside the weight blob");
    return std::vector<float>(data.begin() + off, data.begin() + off + len);
  };
  bool any_q = false, all_q = true;
  std::vector<LayerFormats> formats;
  for (const auto& lj : j.at("layers")) {
    LayerWeights lw;
    if (lj.contains("params")) {
      const json& p = lj.at("params");
      lw.w = get(p.at("w"));
      lw.b = get(p.at("b"));
      lw.w2 = get(p.at("w2"));
      lw.b2 = get(p.at("b2"));
    }
    f.weights.layers.push_back(std::move(lw));
    if (lj.contains("q")) {
      any_q = true;
      const json& q = lj.at("q");
      LayerFormats lf;
      lf.w = QFormat::parse(q.at("w").get<std::string>());
      lf.b = QFormat::parse(q.at("b").get<std::string>());
      lf.out = QFormat::parse(q.at("out").get<std::string>());
      if (q.contains("mid")) lf.mid = QFormat::parse(q.at("mid").get<std::string>());
      formats.push_back(lf);
    } else {
      all_q = false;
    }
  }
  if (any_q && !all_q) throw Error(path + ": Q-formats present on some layers only");
  if (any_q) f.formats = std::move(formats);
  check_weights(f.model, f.weights);
  return f;
}

ModelFile from_quantized(const QuantizedModel& q) {
  ModelFile f;
  f.model = q.model;
  f.weights = dequantize(q);
  f.input_fmt = q.input_fmt;
  std::vector<LayerFormats> formats;
  for (const auto& l : q.layers) formats.push_back(l.fmt);
  f.formats = std::move(formats);
  return f;
}

QuantizedModel to_quantized(const ModelFile& f) {
  if (!f.formats) throw Error(f.model.name + ": model has not been quantized");
  return quantize_model(f.model, f.weights, *f.formats, f.input_fmt);
}

}  // namespace ecnn
