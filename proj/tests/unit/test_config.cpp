#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "helpers.hpp"
#include "sgen/config.hpp"

using namespace sgen;
using nlohmann::json;

namespace {

bool mentions(const config::ConfigError& e, const std::string& field) {
    return std::any_of(e.problems().begin(), e.problems().end(),
                       [&](const std::string& p) { return p.rfind(field + ":", 0) == 0; });
}

// Problems reported for a document, empty when it parses.
std::vector<std::string> problems_of(const json& j) {
    try {
        config::from_json(j);
    } catch (const config::ConfigError& e) {
        return e.problems();
    }
    return {};
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("minimal document takes the defaults") {
        const auto c = config::from_json(json{{"image_path", "a.png"}});
        CHECK(c.image_path == "a.png");
        CHECK(c.mode == model::Mode::unconditional);
        CHECK(c.condition_source == model::ConditionSource::none);
        CHECK(c.lr == 0.0005);
        CHECK(c.beta1 == 0.5);
        CHECK(c.beta2 == 0.999);
        CHECK(c.palette_size == 5);
        CHECK(c.schedule == "cosine");
        CHECK(c.loss_mode == objective::LossMode::perceptual);
        CHECK_FALSE(c.vgg_weights.has_value());
    }

    TEST_CASE("image_path is required") {
        const auto p = problems_of(json::object());
        REQUIRE(p.size() == 1);
        CHECK(p[0].find("image_path") == 0);
        CHECK_THROWS_AS(config::from_json(json{{"image_path", ""}}), config::ConfigError);
    }

    TEST_CASE("every bad field is reported together") {
        const json j = {{"image_path", "a.png"},
                        {"iterations", "many"},
                        {"lr", true},
                        {"mode", "sideways"},
                        {"colour", 3},
                        {"pyramid", {{"scale_factor", "x"}, {"depth", 2}}},
                        {"generator", {{"kernel", 2.5}}}};
        try {
            config::from_json(j);
            FAIL("expected ConfigError");
        } catch (const config::ConfigError& e) {
            CHECK(mentions(e, "iterations"));
            CHECK(mentions(e, "lr"));
            CHECK(mentions(e, "mode"));
            CHECK(mentions(e, "colour"));
            CHECK(mentions(e, "pyramid.scale_factor"));
            CHECK(mentions(e, "pyramid.depth"));
            CHECK(mentions(e, "generator.kernel"));
            CHECK(e.problems().size() == 7);
            CHECK(std::string(e.what()).find("pyramid.depth") != std::string::npos);
        }
    }

    TEST_CASE("range violations name their field") {
        const json base = {{"image_path", "a.png"}};
        auto with = [&](const json& patch) {
            json j = base;
            j.merge_patch(patch);
            return problems_of(j);
        };
        auto names = [](const std::vector<std::string>& p, const std::string& field) {
            return std::any_of(p.begin(), p.end(), [&](const std::string& s) { return s.rfind(field, 0) == 0; });
        };
        CHECK(names(with({{"iterations", 0}}), "iterations"));
        CHECK(names(with({{"lr", -1.0}}), "lr"));
        CHECK(names(with({{"betas", {0.5, 1.0}}}), "betas"));
        CHECK(names(with({{"betas", {0.5}}}), "betas"));
        CHECK(names(with({{"schedule", "step"}}), "schedule"));
        CHECK(names(with({{"version", 2}}), "version"));
        CHECK(names(with({{"pyramid", {{"scale_factor", 1.0}}}}), "pyramid.scale_factor"));
        CHECK(names(with({{"pyramid", {{"min_dim", 300}}}}), "pyramid.max_dim"));
        CHECK(names(with({{"generator", {{"kernel", 4}}}}), "generator.kernel"));
        CHECK(names(with({{"palette_size", 1}}), "palette_size"));
        CHECK(names(with({{"canny", {{"low_threshold", 0.5}, {"high_threshold", 0.2}}}}), "canny"));
        CHECK(names(with({{"seed", -3}}), "seed"));
        CHECK(names(with({{"mode", "conditional"}}), "condition_source"));
        CHECK(names(with({{"condition_source", "edge-map"}}), "condition_source"));
        CHECK(names(with({{"augmentation", {{"crop_fraction_range", {0.9, 0.5}}}}}), "augmentation"));
    }

    TEST_CASE("round trip through json") {
        config::TrainConfig c;
        c.image_path = "x/y.png";
        c.mode = model::Mode::conditional;
        c.condition_source = model::ConditionSource::edge_map;
        c.iterations = 123;
        c.lr = 1e-3;
        c.schedule = "constant";
        c.loss_mode = objective::LossMode::pixel;
        c.vgg_weights = "w.safetensors";
        c.pyramid.scale_factor = 0.6;
        c.augmentation.tps_grid = 5;
        c.generator.channels = 16;
        c.encoder.channels = {8, 16};
        c.seed = 77;
        c.workers = 2;
        const json j = config::to_json(c);
        const auto back = config::from_json(j);
        CHECK(config::to_json(back) == j);
        CHECK(back.seed == 77);
        CHECK(back.augmentation.seed == 77);
        CHECK(back.vgg_weights.value() == "w.safetensors");
    }

    TEST_CASE("load reports unreadable and malformed files") {
        const auto dir = testing::scratch_dir("config");
        CHECK_THROWS_AS(config::load(dir / "absent.json"), std::runtime_error);
        std::ofstream(dir / "bad.json") << "{ not json";
        CHECK_THROWS_AS(config::load(dir / "bad.json"), std::runtime_error);
        std::ofstream(dir / "ok.json") << R"({"image_path": "a.png", "iterations": 5})";
        CHECK(config::load(dir / "ok.json").iterations == 5);
    }

    TEST_CASE("schema lists every serialized field") {
        const json s = config::schema();
        CHECK(s["required"] == json::array({"image_path"}));
        config::TrainConfig c;
        c.image_path = "a.png";
        const json doc = config::to_json(c);
        for (auto it = doc.begin(); it != doc.end(); ++it) {
            const std::string key = it.key();
            CHECK_MESSAGE(s["properties"].contains(key), key);
            if (it->is_object()) {
                for (auto jt = it->begin(); jt != it->end(); ++jt) {
                    const std::string sub = key + "." + jt.key();
                    CHECK_MESSAGE(s["properties"][key]["properties"].contains(jt.key()), sub);
                }
            }
        }
    }
}
