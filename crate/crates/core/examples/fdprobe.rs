use lawseek::mpm::{simulate, Geometry, ThetaPair};
use lawseek::opt::{mse_loss_probe, optimize, FreeSlot, OptConfig};
use lawseek::tasks::{generate_ground_truth, make_task, TaskId};
use lawseek::linalg::Vect;

fn main() {
    let cases: Vec<(&str, usize, [f64; 2], Option<([f64;2],[f64;2])>)> = vec![
        ("sticky std v(1.5,-1) 25f", 25, [1.5, -1.0], None),
        ("sticky std v(1.5,-1) 50f", 50, [1.5, -1.0], None),
        ("sticky tall v(1,-1) 50f", 50, [1.0, -1.0], Some(([0.45, 0.27], [0.06, 0.18]))),
        ("sticky tall v(1.5,-0.5) 40f", 40, [1.5, -0.5], Some(([0.45, 0.27], [0.06, 0.18]))),
    ];
    for (label, frames, v, geo) in cases {
        let mut task = make_task(TaskId::NonlinearElastic);
        task.sim.n_steps = frames;
        task.sim.boundary = lawseek::mpm::Boundary::Sticky;
        task.impact_velocity = Vect::from_slice(2, &v);
        if let Some((c, h)) = geo {
            task.scene = Geometry::Box {
                center: Vect::from_slice(2, &c),
                half_extents: Vect::from_slice(2, &h),
            };
        }
        let initial = task.initial_state();
        let target = match generate_ground_truth(&task) {
            Ok(t) => t,
            Err(e) => { println!("{label}: GT INVALID ({e})"); continue; }
        };
        let theta_guess = ThetaPair::defaults_of(&task.initial_guess);
        let (tr, _, val) = simulate(&task.sim, &task.initial_guess, &theta_guess, &initial);
        if !val.is_valid() { println!("{label}: guess INVALID"); continue; }
        let raw = mse_loss_probe(&tr, &target);

        let opt_cfg = OptConfig { n_steps: 150, ..OptConfig::default() };
        let res = optimize(&task.initial_guess, FreeSlot::Elastic, &task.sim, &opt_cfg, &initial, &target);

        let gt = task.ground_truth.elastic.clone();
        let perturbed = gt.with_defaults(&[13.03 + 1.4, -1.99]);
        let laws = task.assemble(perturbed).unwrap();
        let refit = optimize(&laws, FreeSlot::Elastic, &task.sim, &opt_cfg, &initial, &target);

        println!(
            "{label}: raw {raw:.3e} opt_guess {:.3e}({}) refit {:.3e}({}) theta {:?} best {}",
            res.final_loss, res.validity.is_valid(), refit.final_loss, refit.validity.is_valid(), refit.theta_hat, refit.best_step
        );
    }
}
