use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use lasercover_core::coverage::CoverageError;
use lasercover_core::operator_sim::SimError;
use lasercover_core::planner::PlanError;
use lasercover_core::surface::{RegionError, SurfaceError};
use lasercover_core::trial::{ConfigError, TrialError};

/// JSON error body: `{"error": code, "message": text, "field"?: path, "detail"?: {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

#[derive(Clone, Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: code, message: message.into(), field: None, detail: None } }
    }

    fn with_field(mut self, field: impl Into<String>) -> Self {
        self.body.field = Some(field.into());
        self
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = Some(detail);
        self
    }

    pub fn malformed(field: Option<String>, message: impl Into<String>) -> Self {
        let e = Self::new(StatusCode::BAD_REQUEST, "malformed-body", message);
        match field {
            Some(f) => e.with_field(f),
            None => e,
        }
    }

    pub fn not_found(what: &'static str, id: &str) -> Self {
        let code = match what {
            "job" => "unknown-job",
            _ => "unknown-session",
        };
        Self::new(StatusCode::NOT_FOUND, code, format!("no {what} {id}"))
    }

    pub fn busy() -> Self {
        Self::new(StatusCode::CONFLICT, "session-busy", "another request is modifying this session")
    }

    /// A prerequisite step (mesh, region, plan) has not been done yet.
    pub fn missing(step: &'static str) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "missing-prerequisite", format!("session has no {step} yet"))
            .with_field(step)
    }

    pub fn zero_operable_area() -> Self {
        Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "zero-operable-area",
            "region has no operable area after exclusions and margin",
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<SurfaceError> for ApiError {
    fn from(e: SurfaceError) -> Self {
        let msg = e.to_string();
        match e {
            SurfaceError::Parse { line, .. } => Self::malformed(Some(format!("line {line}")), msg),
            SurfaceError::UnsupportedFormat(_) => Self::malformed(None, msg),
            _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-mesh", msg),
        }
    }
}

impl From<RegionError> for ApiError {
    fn from(e: RegionError) -> Self {
        let msg = e.to_string();
        let err = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-region", msg);
        match e {
            RegionError::EmptySelection => err.with_field("selection"),
            RegionError::InvalidSelection { index, .. } => err.with_field(format!("selection[{index}]")),
            RegionError::SelectionOutsideDomain { polygon, vertex } => {
                err.with_field(format!("selection[{polygon}][{vertex}]"))
            }
            RegionError::InvalidExclusion { zone, .. } => err.with_field(format!("exclusions[{zone}]")),
            RegionError::InvalidMargin(_) => err.with_field("margin"),
            RegionError::Raster(_) => err,
        }
    }
}

impl From<PlanError> for ApiError {
    fn from(e: PlanError) -> Self {
        let msg = e.to_string();
        let err = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "plan-failed", msg);
        match e {
            PlanError::RegionNotPlannable => Self::zero_operable_area(),
            PlanError::InvalidLaser(_) => err.with_field("laser"),
            PlanError::InvalidKinematics => err.with_field("kinematics"),
            PlanError::InvalidStandoff(_) => err.with_field("standoff"),
            PlanError::NoCenters => err.with_detail(json!({ "warning": "no-spot-fits" })),
            PlanError::Overlap { first, second, distance } => {
                err.with_detail(json!({ "first": first, "second": second, "distance": distance }))
            }
            PlanError::Unreachable { shots, reach } => err.with_detail(json!({ "shots": shots, "reach": reach })),
        }
    }
}

impl From<CoverageError> for ApiError {
    fn from(e: CoverageError) -> Self {
        let err = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "scoring-failed", e.to_string());
        match e {
            CoverageError::InvalidPixelSize(_) | CoverageError::DegenerateResolution { .. } => err.with_field("pixel"),
            _ => err,
        }
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidParameter { field, .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "simulation-failed", e.to_string())
                    .with_field(format!("model.{field}"))
            }
            SimError::Plan(p) => p.into(),
        }
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        Self::malformed(e.field().map(str::to_owned), e.to_string())
    }
}

impl From<TrialError> for ApiError {
    fn from(e: TrialError) -> Self {
        match e {
            TrialError::Config(c) => c.into(),
            other => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "trial-failed", other.to_string()),
        }
    }
}

/// Deserializes a JSON body, reporting the path of the offending field. An empty body
/// reads as `{}`.
pub fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let bytes: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { bytes };
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != ".").then_some(path);
        ApiError::malformed(field, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| ApiError::malformed(None, e.to_string()))?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lasercover_core::planner::PlanRequest;

    #[test]
    fn empty_body_reads_as_defaults() {
        let req: PlanRequest = parse_body(b"  ").unwrap();
        assert_eq!(req, PlanRequest::default());
    }

    #[test]
    fn body_errors_carry_the_field_path() {
        let e = parse_body::<PlanRequest>(br#"{"laser": {"fluence": "high"}}"#).unwrap_err();
        assert_eq!(e.status, StatusCode::BAD_REQUEST);
        assert_eq!(e.body.field.as_deref(), Some("laser.fluence"));
        let e = parse_body::<PlanRequest>(b"{} {}").unwrap_err();
        assert_eq!(e.status, StatusCode::BAD_REQUEST);
        let e = parse_body::<PlanRequest>(b"[").unwrap_err();
        assert_eq!(e.body.field, None);
    }

    #[test]
    fn plan_failures_map_to_422() {
        let e = ApiError::from(PlanError::InvalidStandoff(-1.0));
        assert_eq!(e.status, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(e.body.field.as_deref(), Some("standoff"));
        assert_eq!(ApiError::from(PlanError::RegionNotPlannable).body.error, "zero-operable-area");
    }
}
