use std::path::Path;

use airstar_core::config::Config;
use airstar_core::planner::{assemble_context, make_plan, registry, PlanDocument};
use airstar_core::runtime::knowledge_store;
use airstar_core::station::Backends;
use airstar_core::world::load_scenario;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    instruction: String,
    golden: String,
}

#[test]
fn mock_plans_match_goldens() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/goldens/planner");
    let cases: Vec<Case> = serde_json::from_str(&std::fs::read_to_string(dir.join("cases.json")).unwrap()).unwrap();
    assert!(cases.len() >= 6);
    assert!(cases.iter().any(|c| c.instruction == "Hi AirStar, guide me to the badminton court."));

    let world = load_scenario(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/campus.json")).unwrap();
    let cfg = Config::default();
    let kb = knowledge_store(&world.scene, &cfg).unwrap();
    let backends = Backends::mock(&world.scene, &cfg);
    let tools = registry();
    for case in &cases {
        let ctx = assemble_context(&case.instruction, "", &kb, &tools, &[], None);
        let plan = make_plan(&ctx, backends.planner.as_ref()).unwrap();
        let got = plan.document().to_pretty_json() + "\n";
        let want = std::fs::read_to_string(dir.join(&case.golden)).unwrap();
        assert_eq!(got, want, "{}", case.instruction);
        let round: PlanDocument = serde_json::from_str(&want).unwrap();
        assert_eq!(round, plan.document());
    }
}
