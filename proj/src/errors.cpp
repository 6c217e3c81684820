#include "povgen/errors.hpp"

namespace povgen {

const char* to_string(ErrCode code) {
    switch (code) {
        case ErrCode::ParseError: return "ParseError";
        case ErrCode::SchemaViolation: return "SchemaViolation";
        case ErrCode::PermissionDenied: return "PermissionDenied";
        case ErrCode::ReferentialIntegrity: return "ReferentialIntegrity";
        case ErrCode::IllegalTransition: return "IllegalTransition";
        case ErrCode::IncompletePhase: return "IncompletePhase";
        case ErrCode::PhaseGating: return "PhaseGating";
        case ErrCode::NotAvailable: return "NotAvailable";
        case ErrCode::NotSupported: return "NotSupported";
        case ErrCode::UnknownFunction: return "UnknownFunction";
        case ErrCode::UnknownJob: return "UnknownJob";
        case ErrCode::UnknownTopic: return "UnknownTopic";
        case ErrCode::UnknownMethod: return "UnknownMethod";
        case ErrCode::InvalidParams: return "InvalidParams";
        case ErrCode::EmptySpace: return "EmptySpace";
        case ErrCode::UnresolvedSeed: return "UnresolvedSeed";
        case ErrCode::EmptySeed: return "EmptySeed";
        case ErrCode::EmptyCorpus: return "EmptyCorpus";
        case ErrCode::AllExtractionsFailed: return "AllExtractionsFailed";
        case ErrCode::TargetUnmapped: return "TargetUnmapped";
        case ErrCode::DanglingReference: return "DanglingReference";
        case ErrCode::NoCriticalHit: return "NoCriticalHit";
        case ErrCode::StateError: return "StateError";
        case ErrCode::SessionDead: return "SessionDead";
        case ErrCode::IoError: return "IoError";
        case ErrCode::SpawnError: return "SpawnError";
        case ErrCode::InvalidConfig: return "InvalidConfig";
        case ErrCode::Aborted: return "Aborted";
    }
    return "UnknownError";
}

}  // namespace povgen
