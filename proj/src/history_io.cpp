#include <string>

#include "fu/binary_io.hpp"
#include "fu/error.hpp"
#include "fu/fedsim.hpp"

namespace fu {

std::vector<char> serialize_history(const HistoryStore& store) {
    ByteWriter w;
    w.put_bytes("FUHS");
    w.put_u32(kHistoryFormatVersion);
    w.put_u64(store.config_fingerprint);
    w.put_u32(static_cast<std::uint32_t>(store.records.size()));
    for (const auto& rec : store.records) {
        w.put_u32(rec.round_index);
        encode_params(rec.global_before, w);
        w.put_u32(static_cast<std::uint32_t>(rec.updates.size()));
        for (const auto& u : rec.updates) {
            w.put_u32(static_cast<std::uint32_t>(u.client_id));
            w.put_u32(static_cast<std::uint32_t>(u.sample_count));
            encode_params(u.delta, w);
        }
    }
    return w.take();
}

HistoryStore deserialize_history(std::span<const char> bytes, const std::string& context) {
    ByteReader r(bytes, context);
    if (r.get_bytes(4) != "FUHS") throw FormatError(context + ": bad history magic");
    if (std::uint32_t v = r.get_u32(); v != kHistoryFormatVersion)
        throw FormatError(context + ": unsupported history version " + std::to_string(v));

    HistoryStore store;
    store.config_fingerprint = r.get_u64();
    const std::uint32_t count = r.get_u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        RoundRecord rec;
        rec.round_index = r.get_u32();
        if (!store.records.empty() && rec.round_index <= store.records.back().round_index)
            throw FormatError(context + ": round indices are not strictly increasing");
        rec.global_before = decode_params(r);
        const std::uint32_t clients = r.get_u32();
        for (std::uint32_t c = 0; c < clients; ++c) {
            ClientUpdate u;
            u.client_id = static_cast<int>(r.get_u32());
            u.sample_count = r.get_u32();
            u.delta = decode_params(r);
            if (u.delta.spec != rec.global_before.spec)
                throw FormatError(context + ": update shape differs from the round's global model");
            rec.updates.push_back(std::move(u));
        }
        store.records.push_back(std::move(rec));
    }
    if (r.remaining() != 0) throw FormatError(context + ": trailing bytes after last record");
    return store;
}

void save_history(const HistoryStore& store, const std::filesystem::path& path) {
    write_file(path, serialize_history(store));
}

HistoryStore load_history(const std::filesystem::path& path) {
    return deserialize_history(read_file(path), path.string());
}

} // namespace fu
