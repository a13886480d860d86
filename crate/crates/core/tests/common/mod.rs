#![allow(dead_code)]

pub mod gen;
pub mod http;
pub mod oracle;

use text2nosql::engine::DocumentDatabase;
use text2nosql::DocValue;

pub fn json(s: &str) -> DocValue {
    DocValue::from_json(&serde_json::from_str(s).expect("valid JSON fixture"))
}

pub fn database(name: &str, s: &str) -> DocumentDatabase {
    DocumentDatabase::from_value(name, &json(s)).expect("database fixture")
}

pub fn fixture(name: &str) -> DocumentDatabase {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(format!("{name}.json"));
    text2nosql::engine::load_database(path).expect("fixture bundle")
}

pub const CASE_NLQ: &str = "What are the dates of completion for tests that have received a failing result";

pub const CASE_GOLD: &str = r#"db.Subjects.aggregate([ { $unwind: "$Courses" }, { $unwind: "$Courses.Student_Course_Enrolment" }, { $unwind: "$Courses.Student_Course_Enrolment.Student_Tests_Taken" }, { $match: { "Courses.Student_Course_Enrolment.Student_Tests_Taken.test_result": "Fail" } }, { $project: { date_of_completion: "$Courses.Student_Course_Enrolment.date_of_completion", _id: 0 } } ]);"#;

pub const CASE_RAG: &str = r#"db.Subjects.aggregate([ { $unwind: "$Courses" }, { $unwind: "$Courses.Student_Course_Enrolment" }, { $unwind: "$Courses.Student_Course_Enrolment.Student_Tests_Taken" }, { $match: { "Courses.Student_Course_Enrolment.Student_Tests_Taken.test_result": "Fail" } }, { $project: { _id: 0, date_test_taken: "$Courses.Student_Course_Enrolment.Student_Tests_Taken.date_test_taken" } } ]);"#;

pub const CASE_FINETUNED: &str = r#"db.Courses.aggregate([ { $unwind: "$Courses" }, { $unwind: "$Courses.Student_Course_Enrolment" }, { $unwind: "$Courses.Student_Course_Enrolment.Student_Tests_Taken" }, { $match: { "Courses.Student_Course_Enrolment.Student_Tests_Taken.test_result": "Fail" } }, { $project: { date_of_completion: "$Courses.Student_Course_Enrolment.date_of_completion", _id: 0 } } ]);"#;

pub const CASE_SMART: &str = CASE_GOLD;

pub const REF_COLORS_QUERY: &str = r#"db.Ref_Colors.aggregate([{$unwind:"$Products"},{$group: {_id:null,count:{$sum:1}}},{$project:{_id:0, count:1}}]);"#;
