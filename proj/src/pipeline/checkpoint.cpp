#include "checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "../core/serialize.hpp"

namespace a2v::pipeline {

using nlohmann::json;

namespace {

void pack_store(ArrayFile& f, const ParamStore& ps) {
    for (const auto& name : ps.order) f.put(name, ps.value.at(name));
}

ParamStore unpack_store(const ArrayFile& f, const std::string& prefix) {
    ParamStore ps;
    for (const auto& name : f.order)
        if (name.rfind(prefix, 0) == 0) ps.add(name, f.get(name));
    return ps;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    ArrayFile f;
    json meta;
    meta["kind"] = "a2v-checkpoint";
    meta["stage"] = stage;
    meta["step"] = step;
    meta["config"] = json::parse(config.to_json_text());
    meta["loss_curves"] = loss_curves;
    meta["dropout"] = {{"steps", dropout_steps}, {"speech_dropped", dropout_speech}, {"ref_dropped", dropout_ref}};
    f.meta_json = meta.dump();
    pack_store(f, codec_params);
    pack_store(f, speechae_params);
    pack_store(f, backbone_params);
    f.save(path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    ArrayFile f = ArrayFile::load(path);
    json meta = json::parse(f.meta_json);
    if (meta.value("kind", "") != "a2v-checkpoint")
        throw std::runtime_error("checkpoint: " + path + " is not a checkpoint container");
    Checkpoint c;
    c.config = ExperimentConfig::from_json_text(meta.at("config").dump());
    c.stage = meta.value("stage", 0);
    c.step = meta.value("step", 0);
    if (meta.contains("loss_curves"))
        c.loss_curves = meta["loss_curves"].get<std::map<std::string, std::vector<double>>>();
    if (meta.contains("dropout")) {
        c.dropout_steps = meta["dropout"].value("steps", 0);
        c.dropout_speech = meta["dropout"].value("speech_dropped", 0);
        c.dropout_ref = meta["dropout"].value("ref_dropped", 0);
    }
    c.codec_params = unpack_store(f, "codec.");
    c.speechae_params = unpack_store(f, "speechae.");
    c.backbone_params = unpack_store(f, "backbone.");
    return c;
}

uint32_t checkpoint_file_crc(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return crc32(bytes.data(), bytes.size());
}

}  // namespace a2v::pipeline
