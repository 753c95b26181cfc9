use fps_core::backend::mock::MockBackend;
use fps_core::metrics::belief_average;
use fps_core::persona::{default_name_pool, ProfileKind};
use fps_core::simulator::run_simulation;
use fps_core::{PromptSet, SimulationConfig};

#[test]
fn credulous_population_saturates() {
    let mut config = SimulationConfig::new("the moon landing was staged");
    config.profile = ProfileKind::Credulous;
    let seeds = 40;
    let mut mean_curve = vec![0.0; 16];
    let mut mean_final = 0.0;
    for seed in 0..seeds {
        config.seed = seed;
        let trace = run_simulation(
            &config,
            &MockBackend::default(),
            &PromptSet::default(),
            &default_name_pool(),
        )
        .unwrap();
        for (m, i) in mean_curve.iter_mut().zip(trace.infected_series()) {
            *m += i as f64 / seeds as f64;
        }
        mean_final += belief_average(&trace.final_beliefs()) / seeds as f64;
    }
    let peak = mean_curve
        .iter()
        .enumerate()
        .fold(0, |best, (t, &v)| if v > mean_curve[best] { t } else { best });
    for pair in mean_curve[..=peak].windows(2) {
        assert!(pair[1] >= pair[0], "{mean_curve:?}");
    }
    assert!(mean_final > 0.8, "{mean_final}");
}

#[test]
fn no_contacts_with_believers_means_no_change() {
    let mut config = SimulationConfig::new("x");
    config.n_initially_infected = 0;
    config.profile = ProfileKind::Credulous;
    let trace = run_simulation(
        &config,
        &MockBackend::default(),
        &PromptSet::default(),
        &default_name_pool(),
    )
    .unwrap();
    assert!(trace.counts.iter().all(|c| c.susceptible == 30));
}
