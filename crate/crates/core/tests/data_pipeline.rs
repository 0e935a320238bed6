use chrono::NaiveDate;
use seaird::data_io::{
    build_series, find_window, parse_daily_csv, window_registry, write_daily_csv, BaselineMode, CountryWindow,
    DailyRecord,
};
use seaird::Error;

const ECDC: &[u8] = include_bytes!("fixtures/ecdc_brazil_snapshot.csv");
const CANONICAL: &[u8] = include_bytes!("fixtures/canonical_daily.csv");

fn day(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, m, d).unwrap()
}

#[test]
fn snapshot_builds_the_brazil_window() {
    let records = parse_daily_csv(ECDC).unwrap();
    assert_eq!(records.len(), 76);
    let latest = records.iter().find(|r| r.date == day(5, 16)).unwrap();
    assert_eq!((latest.cases, latest.deaths), (14919, 816));
    assert_eq!(latest.population, Some(211_049_527));

    let w = find_window("Brazil").unwrap();
    let built = build_series(&records, &w, BaselineMode::IncludePriorHistory).unwrap();
    let s = &built.series;
    assert_eq!(s.len(), (w.test_end - w.train_start).num_days() as usize + 1);
    assert_eq!(s.start_date, w.train_start);
    assert!(s.values.windows(2).all(|p| {
        p[1].cum_infected >= p[0].cum_infected && p[1].cum_deaths >= p[0].cum_deaths
    }));
    assert_eq!(built.population, Some(211_049_527.0));

    // Prior history only shifts the cases channel by a constant.
    let bare = build_series(&records, &w, BaselineMode::WindowOnly).unwrap().series;
    let shift = s.baseline.cum_infected;
    assert!(shift > 0.0);
    for (a, b) in s.values.iter().zip(&bare.values) {
        assert_eq!(a.cum_infected - b.cum_infected, shift);
    }
}

#[test]
fn canonical_fixture_round_trips() {
    let records = parse_daily_csv(CANONICAL).unwrap();
    let text = write_daily_csv(&records).unwrap();
    assert_eq!(text.as_bytes(), CANONICAL);
}

#[test]
fn truncated_data_names_the_missing_days() {
    let records: Vec<DailyRecord> = parse_daily_csv(ECDC)
        .unwrap()
        .into_iter()
        .filter(|r| r.date != day(4, 10) && r.date != day(5, 1))
        .collect();
    let w = find_window("Brazil").unwrap();
    match build_series(&records, &w, BaselineMode::default()) {
        Err(Error::MissingDays { missing }) => assert_eq!(missing, vec![day(4, 10), day(5, 1)]),
        other => panic!("expected missing days, got {other:?}"),
    }
}

#[test]
fn negative_correction_is_repaired() {
    let recs: Vec<DailyRecord> = [5, -2, 4]
        .iter()
        .enumerate()
        .map(|(k, &c)| DailyRecord {
            date: day(4, 1 + k as u32),
            cases: c,
            deaths: 0,
            country_id: "Testland".into(),
            population: Some(1000),
        })
        .collect();
    let w = CountryWindow::new("Testland", day(4, 1), day(4, 2), day(4, 3));
    let built = build_series(&recs, &w, BaselineMode::default()).unwrap();
    assert_eq!(built.series.infected(), vec![5.0, 5.0, 7.0]);
    assert_eq!(built.repairs, 1);
}

#[test]
fn registry_is_well_formed() {
    let reg = window_registry();
    assert_eq!(reg.len(), 6);
    for w in &reg {
        assert!(w.validate().is_ok(), "{w:?}");
    }
    let france = find_window("france").unwrap();
    assert_eq!((france.train_start, france.train_end), (day(3, 26), day(4, 16)));
    assert!(find_window("Atlantis").is_none());
}
