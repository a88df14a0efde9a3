#pragma once

#include <stdexcept>
#include <string>

namespace rcombat {

enum class ErrorCode {
    // data model
    MissingColumn,
    DuplicateSubjectId,
    NonFiniteValue,
    EmptySite,
    IoFailure,
    StratumTooSmall,
    TaxonomyMismatch,
    // normative model / EB
    RankDeficientDesign,
    TooFewSubjects,
    ZeroResidualVariance,
    MaskTooAggressive,
    EBNonConvergence,
    NonPositiveDelta,
    // filters
    ColumnTooShort,
    UnknownMethod,
    // mlp
    ShapeMismatch,
    DegenerateBatch,
    NonFiniteLoss,
    EmptySplit,
    SiteTooSmall,
    // synth
    PoolExhausted,
    InvalidRange,
    // eval
    SubjectMismatch,
    ZeroReferenceStd,
    EmptyInput,
    NonPositiveStd,
    DegenerateControls,
    // cli
    ConfigError,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::DuplicateSubjectId: return "DuplicateSubjectId";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::EmptySite: return "EmptySite";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::StratumTooSmall: return "StratumTooSmall";
        case ErrorCode::TaxonomyMismatch: return "TaxonomyMismatch";
        case ErrorCode::RankDeficientDesign: return "RankDeficientDesign";
        case ErrorCode::TooFewSubjects: return "TooFewSubjects";
        case ErrorCode::ZeroResidualVariance: return "ZeroResidualVariance";
        case ErrorCode::MaskTooAggressive: return "MaskTooAggressive";
        case ErrorCode::EBNonConvergence: return "EBNonConvergence";
        case ErrorCode::NonPositiveDelta: return "NonPositiveDelta";
        case ErrorCode::ColumnTooShort: return "ColumnTooShort";
        case ErrorCode::UnknownMethod: return "UnknownMethod";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::DegenerateBatch: return "DegenerateBatch";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::EmptySplit: return "EmptySplit";
        case ErrorCode::SiteTooSmall: return "SiteTooSmall";
        case ErrorCode::PoolExhausted: return "PoolExhausted";
        case ErrorCode::InvalidRange: return "InvalidRange";
        case ErrorCode::SubjectMismatch: return "SubjectMismatch";
        case ErrorCode::ZeroReferenceStd: return "ZeroReferenceStd";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::NonPositiveStd: return "NonPositiveStd";
        case ErrorCode::DegenerateControls: return "DegenerateControls";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace rcombat
