#include "provlens/types.hpp"

namespace provlens {

namespace {

constexpr std::array<std::string_view, kNumRelations> kRelationNames = {
    "READ", "WRITE", "EXECUTE", "OPEN", "CLOSE", "CONNECT", "SEND", "RECV", "CLONE",
};

constexpr std::array<std::string_view, kNumRelations> kReportNames = {
    "read", "write", "exec", "open", "close", "connect", "send", "recv", "clone",
};

constexpr std::array<std::string_view, kNumNodeKinds> kKindNames = {"PROCESS", "FILE", "SOCKET"};

} // namespace

std::string_view to_string(NodeKind kind) { return kKindNames[index_of(kind)]; }

std::string_view to_string(Relation rel) { return kRelationNames[index_of(rel)]; }

std::string_view report_name(Relation rel) { return kReportNames[index_of(rel)]; }

std::string_view to_string(TruthLabel label) {
    switch (label) {
    case TruthLabel::Benign:
        return "BENIGN";
    case TruthLabel::Malicious:
        return "MALICIOUS";
    case TruthLabel::Unknown:
        break;
    }
    return "UNKNOWN";
}

std::optional<NodeKind> parse_node_kind(std::string_view text) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == text) return static_cast<NodeKind>(i);
    }
    return std::nullopt;
}

std::optional<Relation> parse_relation(std::string_view text) {
    for (std::size_t i = 0; i < kRelationNames.size(); ++i) {
        if (kRelationNames[i] == text) return static_cast<Relation>(i);
    }
    return std::nullopt;
}

std::optional<Relation> parse_report_relation(std::string_view text) {
    for (std::size_t i = 0; i < kReportNames.size(); ++i) {
        if (kReportNames[i] == text) return static_cast<Relation>(i);
    }
    return std::nullopt;
}

std::optional<TruthLabel> parse_truth_label(std::string_view text) {
    if (text == "BENIGN") return TruthLabel::Benign;
    if (text == "MALICIOUS") return TruthLabel::Malicious;
    if (text == "UNKNOWN") return TruthLabel::Unknown;
    return std::nullopt;
}

std::string relation_alphabet() {
    std::string out;
    for (auto name : kRelationNames) {
        if (!out.empty()) out += ", ";
        out += name;
    }
    return out;
}

} // namespace provlens
