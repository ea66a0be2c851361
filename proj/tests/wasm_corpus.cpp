// Writes compiled adapter modules plus host-oracle expectations for an
// external WebAssembly engine to check: <dir>/<n>.wasm and <dir>/corpus.json.

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "oracles.hpp"

namespace {

std::string bits_hex(double v) {
    std::uint64_t b;
    std::memcpy(&b, &v, 8);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(b));
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::fprintf(stderr, "usage: tip_wasm_corpus <out dir> <formulas>\n");
        return 1;
    }
    namespace fs = std::filesystem;
    const fs::path dir = argv[1];
    const std::size_t count = std::stoul(argv[2]);
    fs::create_directories(dir);

    tip::Rng rng(0xE1CE);
    nlohmann::json list = nlohmann::json::array();
    auto emit = [&](const std::string& name, const std::string& formula, bool f64,
                    const std::function<double(double)>& expect) {
        const auto schema = f64 ? tip::DataSchema::F64 : tip::DataSchema::F32;
        auto a = tip::adapter::compile({name, schema, schema, formula});
        std::ofstream(dir / (name + ".wasm"), std::ios::binary)
            .write(reinterpret_cast<const char*>(a.wasm_bytes.data()), static_cast<std::streamsize>(a.wasm_bytes.size()));
        nlohmann::json cases = nlohmann::json::array();
        for (int i = 0; i < 20; ++i) {
            double x = oracle::random_input(rng);
            if (!f64) x = static_cast<float>(x);
            cases.push_back({bits_hex(x), bits_hex(expect(x))});
        }
        list.push_back({{"file", name + ".wasm"}, {"formula", formula}, {"width", f64 ? "f64" : "f32"}, {"cases", cases}});
    };

    emit("celsius", "x * 1.8 + 32.0", false, [](double x) { return double(float(x) * 1.8f + 32.0f); });
    emit("pulse", "x * 0.2 + 0.0", false, [](double x) { return double(float(x) * 0.2f + 0.0f); });
    for (std::size_t i = 0; i < count; ++i) {
        auto e = oracle::random_expr(rng, 1 + static_cast<int>(rng.below(6)));
        const bool f64 = i % 2 == 1;
        emit("f" + std::to_string(i), oracle::render(*e), f64, [e, f64](double x) {
            return f64 ? oracle::eval<double>(*e, x) : double(oracle::eval<float>(*e, static_cast<float>(x)));
        });
    }
    std::ofstream(dir / "corpus.json") << list.dump(1) << "\n";
    std::printf("%zu modules\n", list.size());
    return 0;
}
