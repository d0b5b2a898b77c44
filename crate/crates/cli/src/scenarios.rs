//! The scenario registry: each entry reproduces one experiment family at
//! desk scale and emits plot-ready CSV plus summary metrics.

use std::f64::consts::{FRAC_PI_2, PI};

use donorsim_core::analysis::fit::{bootstrap_fit_ci, fit_rb, fit_stretched};
use donorsim_core::analysis::metrics::{
    bias_ratio, ghz_projector_fidelity, ghz_witness, state_fidelity, truth_table_fidelity,
    witness_data_from_state,
};
use donorsim_core::analysis::tomo::{
    measurement_settings, mle_rhorr, sampled_dataset, MleOptions,
};
use donorsim_core::bench::{
    average_fidelity_from_decay, interleaved_gate_fidelity, run_rb_experiment, BenchOp,
    CliffordGroup, GateNoise, RbConfig,
};
use donorsim_core::circuits::{
    apply_circuit, bell_prep_circuit, cccz_calibration_sweep, ghz_prep_circuit, toffoli_circuit,
    truth_table, BellState, Circuit, ErrorAxis, ExecOptions, DMatrixF64,
};
use donorsim_core::detection::{
    bell_fidelity, error_detection_circuit, extract_syndrome, pauli_frame_update,
    pauli_frame_update_z_only, syndrome_oracle, uncorrected_state, Codeword, InjectedError,
    SyndromeRecord, CODE_QUBIT_A, CODE_QUBIT_B, SYNDROME_ORDER,
};
use donorsim_core::dynamics::{DensityMatrix, EvolutionContext, NoiseModel, SpinNoise};
use donorsim_core::readout::{
    elzerman_single_shot, qnd_nuclear_readout, readout_fidelity_analysis, ElzermanParams,
    LabeledShot,
};
use donorsim_core::spin::{sample_feasible_donor_count, DonorSamplingConfig, Register};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde_json::json;

use crate::{NoiseChoice, ScenarioCtx, ScenarioOutput};

/// All registered scenarios, in presentation order.
pub static REGISTRY: &[crate::Scenario] = &[
    crate::Scenario {
        name: "toffoli_truth_table",
        about: "Truth table of the three-control Toffoli on the four-nucleus register",
        run: toffoli_truth_table,
    },
    crate::Scenario {
        name: "bell_pairs",
        about: "Prepare all four Bell pairs on the code qubits; tomograph and reconstruct",
        run: bell_pairs,
    },
    crate::Scenario {
        name: "ghz_witness",
        about: "Four-nucleus GHZ preparation and entanglement-witness evaluation",
        run: ghz_witness_scenario,
    },
    crate::Scenario {
        name: "error_sweep_z",
        about: "Syndrome response to a swept-angle Z rotation on a code qubit",
        run: |ctx| error_sweep(ctx, ErrorAxis::Z, "z"),
    },
    crate::Scenario {
        name: "error_sweep_x",
        about: "Syndrome response to a swept-angle X rotation on a code qubit",
        run: |ctx| error_sweep(ctx, ErrorAxis::X, "x"),
    },
    crate::Scenario {
        name: "error_sweep_y",
        about: "Syndrome response to a swept-angle Y rotation on a code qubit",
        run: |ctx| error_sweep(ctx, ErrorAxis::Y, "y"),
    },
    crate::Scenario {
        name: "stabilizer_basis_table",
        about: "Syndrome tables for Bell codewords and discrete Pauli errors",
        run: stabilizer_basis_table,
    },
    crate::Scenario {
        name: "arbitrary_error_grid",
        about: "Syndrome response over a grid of in-plane error axes and angles",
        run: arbitrary_error_grid,
    },
    crate::Scenario {
        name: "dephasing_detection",
        about: "Syndrome activation versus storage time (always runs the device \
                dephasing model; the noise flag selects the gate mode)",
        run: dephasing_detection,
    },
    crate::Scenario {
        name: "pfu_recovery",
        about: "Pauli-frame-update recovery versus storage time (always runs the \
                device dephasing model; the noise flag selects the gate mode)",
        run: pfu_recovery,
    },
    crate::Scenario {
        name: "rb_1q",
        about: "Single-qubit randomized benchmarking under a gate-level depolarizing \
                channel (the channel is the subject; the noise flag is recorded only)",
        run: rb_1q,
    },
    crate::Scenario {
        name: "irb_2q",
        about: "Two-qubit interleaved randomized benchmarking of the CZ element \
                (gate-level depolarizing channel)",
        run: irb_2q,
    },
    crate::Scenario {
        name: "ramsey_suite",
        about: "Ramsey fringes and T2* extraction for every spin in the register \
                (always runs the device dephasing model)",
        run: ramsey_suite,
    },
    crate::Scenario {
        name: "elzerman_study",
        about: "Single-shot electron readout Monte Carlo: threshold sweep, window \
                sweep and repetitive (majority-vote) nuclear readout",
        run: elzerman_study,
    },
    crate::Scenario {
        name: "donor_sampling",
        about: "Feasible-donor-count statistics under spectral-crowding selection",
        run: donor_sampling,
    },
    crate::Scenario {
        name: "bias_ratio",
        about: "Error bias (Z vs X) of a stored Bell pair under T1 = 1e4·T2* noise \
                (constructs its own noise model)",
        run: bias_ratio_scenario,
    },
    crate::Scenario {
        name: "cccz_calibration",
        about: "Conditional-pulse duration calibration by Ramsey interferometry \
                (always pulse-level)",
        run: cccz_calibration,
    },
    crate::Scenario {
        name: "error_budget",
        about: "Entangling-fidelity budget under all four noise-source toggles",
        run: error_budget,
    },
];

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn register(ctx: &ScenarioCtx) -> Result<Register, String> {
    Register::new(ctx.spec.clone()).map_err(|e| e.to_string())
}

fn register4(ctx: &ScenarioCtx) -> Result<Register, String> {
    let reg = register(ctx)?;
    if reg.n_nuclei() != 4 {
        return Err(format!(
            "this scenario needs exactly 4 active nuclei, config has {}",
            reg.n_nuclei()
        ));
    }
    Ok(reg)
}

/// Gate execution + ambient noise straight from the noise flag.
fn exec_options(choice: NoiseChoice, reg: &Register) -> ExecOptions {
    match choice {
        NoiseChoice::None => ExecOptions::ideal_noiseless(reg),
        NoiseChoice::Dephasing => {
            ExecOptions::ideal_with_noise(reg, NoiseModel::from_device(reg).with_segment_reset())
        }
        NoiseChoice::Crosstalk => ExecOptions::pulse_noiseless(reg),
        NoiseChoice::Both => {
            ExecOptions::pulse_with_noise(reg, NoiseModel::from_device(reg).with_segment_reset())
        }
    }
}

/// For storage-time scenarios: the device dephasing model always runs; the
/// flag only chooses ideal vs pulse-level gate compilation.
fn storage_options(choice: NoiseChoice, reg: &Register) -> ExecOptions {
    let noise = NoiseModel::from_device(reg).with_segment_reset();
    match choice {
        NoiseChoice::None | NoiseChoice::Dephasing => ExecOptions::ideal_with_noise(reg, noise),
        NoiseChoice::Crosstalk | NoiseChoice::Both => ExecOptions::pulse_with_noise(reg, noise),
    }
}

fn run_to_state(
    reg: &Register,
    circuit: &Circuit,
    opts: &ExecOptions,
) -> Result<DensityMatrix, String> {
    let mut state = DensityMatrix::ground(reg);
    let mut ectx = EvolutionContext::fresh(reg);
    apply_circuit(reg, circuit, opts, &mut state, &mut ectx).map_err(|e| e.to_string())?;
    ectx.restore_canonical(reg, &mut state);
    Ok(state)
}

fn bell_slug(which: BellState) -> &'static str {
    match which {
        BellState::PhiPlus => "phi_plus",
        BellState::PhiMinus => "phi_minus",
        BellState::PsiPlus => "psi_plus",
        BellState::PsiMinus => "psi_minus",
    }
}

fn record_probability(records: &[SyndromeRecord], sz: u8, sx: u8) -> f64 {
    records
        .iter()
        .find(|r| r.sz_outcome == sz && r.sx_outcome == sx)
        .map(|r| r.probability)
        .unwrap_or(0.0)
}

fn syndrome_columns(records: &[SyndromeRecord]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (i, &(sz, sx)) in SYNDROME_ORDER.iter().enumerate() {
        out[i] = record_probability(records, sz, sx);
    }
    out
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

// ---------------------------------------------------------------------------
// Scenario implementations
// ---------------------------------------------------------------------------

fn toffoli_truth_table(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let reg = register4(ctx)?;
    let target = 2usize;
    let opts = exec_options(ctx.noise, &reg);
    let circuit = toffoli_circuit(&reg, target);
    let table = truth_table(&reg, &circuit, &opts).map_err(|e| e.to_string())?;

    let n = reg.n_nuclei();
    let dim = 1usize << n;
    let target_bit = 1usize << (n - target);
    let controls_mask = (dim - 1) ^ target_bit;
    let mut ideal = DMatrixF64::zeros(dim, dim);
    for input in 0..dim {
        let output = if input & controls_mask == controls_mask { input ^ target_bit } else { input };
        ideal[(input, output)] = 1.0;
    }
    let fidelity = truth_table_fidelity(&table, &ideal).map_err(|e| e.to_string())?;

    let mut csv = String::from("input");
    for col in 0..dim {
        csv.push_str(&format!(",p_{col:0n$b}"));
    }
    csv.push('\n');
    for input in 0..dim {
        csv.push_str(&format!("{input:0n$b}"));
        for col in 0..dim {
            csv.push(',');
            csv.push_str(&fmt(table[(input, col)]));
        }
        csv.push('\n');
    }

    Ok(ScenarioOutput {
        params: json!({ "target_qubit": target, "inputs": dim }),
        summary: json!({ "truth_table_fidelity": fidelity }),
        csvs: vec![("truth_table.csv".into(), csv)],
    })
}

fn bell_pairs(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let reg = register4(ctx)?;
    let opts = exec_options(ctx.noise, &reg);
    let shots = 1000u64;
    let settings = measurement_settings(2);
    let mut rng = ChaCha12Rng::seed_from_u64(ctx.seed);

    let mut fid_csv = String::from("state,fidelity_direct,fidelity_mle\n");
    let mut csvs = Vec::new();
    let mut summary = serde_json::Map::new();
    for which in BellState::ALL {
        let circuit = bell_prep_circuit(&reg, CODE_QUBIT_A, CODE_QUBIT_B, which);
        let state = run_to_state(&reg, &circuit, &opts)?;
        let rho4 = state.partial_trace_keep(&[CODE_QUBIT_A, CODE_QUBIT_B]);
        let psi = which.statevector();
        let f_direct = state_fidelity(&rho4, &psi).map_err(|e| e.to_string())?;

        let ds = sampled_dataset(&rho4, &settings, shots, &mut rng);
        let mle = mle_rhorr(&ds, &MleOptions::default()).map_err(|e| e.to_string())?;
        let f_mle = state_fidelity(&mle.rho, &psi).map_err(|e| e.to_string())?;

        let mut tomo_csv = String::from("basis,n_00,n_01,n_10,n_11\n");
        for s in &ds.settings {
            tomo_csv.push_str(&s.label);
            for f in &s.frequencies {
                tomo_csv.push_str(&format!(",{}", (f * shots as f64).round() as u64));
            }
            tomo_csv.push('\n');
        }
        csvs.push((format!("tomo_{}.csv", bell_slug(which)), tomo_csv));

        fid_csv.push_str(&format!("{},{},{}\n", bell_slug(which), fmt(f_direct), fmt(f_mle)));
        summary.insert(
            bell_slug(which).to_string(),
            json!({ "fidelity_direct": f_direct, "fidelity_mle": f_mle, "mle_iterations": mle.iterations }),
        );
    }
    csvs.insert(0, ("bell_fidelities.csv".into(), fid_csv));

    Ok(ScenarioOutput {
        params: json!({ "code_qubits": [CODE_QUBIT_A, CODE_QUBIT_B], "tomography_shots": shots }),
        summary: serde_json::Value::Object(summary),
        csvs,
    })
}

fn ghz_witness_scenario(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let reg = register4(ctx)?;
    let opts = exec_options(ctx.noise, &reg);
    let state = run_to_state(&reg, &ghz_prep_circuit(&reg), &opts)?;
    let rho16 = state.partial_trace_keep(&[1, 2, 3, 4]);

    let data = witness_data_from_state(&rho16).map_err(|e| e.to_string())?;
    let w = ghz_witness(&data);
    let f_projector = ghz_projector_fidelity(&rho16).map_err(|e| e.to_string())?;

    let mut csv = String::from("term,value\n");
    csv.push_str(&format!("p_all_down,{}\n", fmt(data.p_all_down)));
    csv.push_str(&format!("p_all_up,{}\n", fmt(data.p_all_up)));
    for (k, c) in data.coherences.iter().enumerate() {
        csv.push_str(&format!("coherence_k{},{}\n", k + 1, fmt(*c)));
    }
    csv.push_str(&format!("witness_expectation,{}\n", fmt(w.expectation)));
    csv.push_str(&format!("fidelity,{}\n", fmt(w.fidelity)));

    Ok(ScenarioOutput {
        params: json!({ "ghz_qubits": [1, 2, 3, 4] }),
        summary: json!({
            "witness_expectation": w.expectation,
            "fidelity_decomposition": w.fidelity,
            "fidelity_projector": f_projector,
            "genuinely_entangled": w.expectation < 0.0,
        }),
        csvs: vec![("witness_terms.csv".into(), csv)],
    })
}

fn error_sweep(ctx: &ScenarioCtx, axis: ErrorAxis, slug: &str) -> Result<ScenarioOutput, String> {
    let reg = register4(ctx)?;
    let opts = exec_options(ctx.noise, &reg);
    let codeword = Codeword::Bell(BellState::PhiPlus);
    let thetas = linspace(0.0, 2.0 * PI, 33);

    let mut csv = String::from(
        "theta,p_00,p_01,p_10,p_11,oracle_00,oracle_01,oracle_10,oracle_11\n",
    );
    let mut max_dev = 0.0f64;
    for &theta in &thetas {
        let error = InjectedError { code_qubit: CODE_QUBIT_B, theta, axis };
        let circuit = error_detection_circuit(&reg, codeword, Some(error.clone()), 0.0)
            .map_err(|e| e.to_string())?;
        let records = extract_syndrome(&reg, &circuit, &opts).map_err(|e| e.to_string())?;
        let p = syndrome_columns(&records);
        let oracle = syndrome_oracle(codeword, Some(&error));
        for i in 0..4 {
            max_dev = max_dev.max((p[i] - oracle[i]).abs());
        }
        csv.push_str(&fmt(theta));
        for v in p.iter().chain(oracle.iter()) {
            csv.push(',');
            csv.push_str(&fmt(*v));
        }
        csv.push('\n');
    }

    Ok(ScenarioOutput {
        params: json!({
            "axis": slug,
            "theta_points": thetas.len(),
            "codeword": "phi_plus",
            "error_qubit": CODE_QUBIT_B,
        }),
        summary: json!({ "max_abs_oracle_deviation": max_dev }),
        csvs: vec![(format!("sweep_{slug}.csv"), csv)],
    })
}

fn stabilizer_basis_table(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let reg = register4(ctx)?;
    let opts = exec_options(ctx.noise, &reg);

    // Table A: each Bell codeword lands in its own syndrome branch.
    let mut bell_csv = String::from("codeword,p_00,p_01,p_10,p_11\n");
    for which in BellState::ALL {
        let circuit = error_detection_circuit(&reg, Codeword::Bell(which), None, 0.0)
            .map_err(|e| e.to_string())?;
        let records = extract_syndrome(&reg, &circuit, &opts).map_err(|e| e.to_string())?;
        let p = syndrome_columns(&records);
        bell_csv.push_str(bell_slug(which));
        for v in p {
            bell_csv.push(',');
            bell_csv.push_str(&fmt(v));
        }
        bell_csv.push('\n');
    }

    // Table B: the nine discrete error cases (identity + π rotations about
    // X/Y/Z on either code qubit, plus zero-angle controls).
    let mut cases: Vec<(String, Option<InjectedError>, (u8, u8))> =
        vec![("none".into(), None, (0, 0))];
    for q in [CODE_QUBIT_A, CODE_QUBIT_B] {
        for (axis, label, syn) in [
            (ErrorAxis::X, "x_pi", (1u8, 0u8)),
            (ErrorAxis::Y, "y_pi", (1, 1)),
            (ErrorAxis::Z, "z_pi", (0, 1)),
        ] {
            cases.push((
                format!("{label}_q{q}"),
                Some(InjectedError { code_qubit: q, theta: PI, axis }),
                syn,
            ));
        }
        cases.push((
            format!("x_zero_q{q}"),
            Some(InjectedError { code_qubit: q, theta: 0.0, axis: ErrorAxis::X }),
            (0, 0),
        ));
    }
    let mut err_csv =
        String::from("case,expected_sz,expected_sx,p_00,p_01,p_10,p_11,p_expected_branch\n");
    let mut min_expected = 1.0f64;
    for (label, error, (sz, sx)) in &cases {
        let circuit =
            error_detection_circuit(&reg, Codeword::Bell(BellState::PhiPlus), error.clone(), 0.0)
                .map_err(|e| e.to_string())?;
        let records = extract_syndrome(&reg, &circuit, &opts).map_err(|e| e.to_string())?;
        let p = syndrome_columns(&records);
        let p_branch = record_probability(&records, *sz, *sx);
        min_expected = min_expected.min(p_branch);
        err_csv.push_str(&format!("{label},{sz},{sx}"));
        for v in p {
            err_csv.push(',');
            err_csv.push_str(&fmt(v));
        }
        err_csv.push_str(&format!(",{}\n", fmt(p_branch)));
    }

    Ok(ScenarioOutput {
        params: json!({ "discrete_cases": cases.len() }),
        summary: json!({ "min_expected_branch_probability": min_expected }),
        csvs: vec![("bell_inputs.csv".into(), bell_csv), ("pauli_errors.csv".into(), err_csv)],
    })
}

fn arbitrary_error_grid(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let reg = register4(ctx)?;
    let opts = exec_options(ctx.noise, &reg);
    let codeword = Codeword::Bell(BellState::PhiPlus);
    let phis = linspace(0.0, PI, 9);
    let thetas = linspace(0.0, 2.0 * PI, 17);

    let mut csv = String::from("phi,theta,p_00,p_01,p_10,p_11\n");
    let mut max_dev = 0.0f64;
    for &phi in &phis {
        for &theta in &thetas {
            let error =
                InjectedError { code_qubit: CODE_QUBIT_B, theta, axis: ErrorAxis::InPlane(phi) };
            let circuit = error_detection_circuit(&reg, codeword, Some(error.clone()), 0.0)
                .map_err(|e| e.to_string())?;
            let records = extract_syndrome(&reg, &circuit, &opts).map_err(|e| e.to_string())?;
            let p = syndrome_columns(&records);
            let oracle = syndrome_oracle(codeword, Some(&error));
            for i in 0..4 {
                max_dev = max_dev.max((p[i] - oracle[i]).abs());
            }
            csv.push_str(&format!("{},{}", fmt(phi), fmt(theta)));
            for v in p {
                csv.push(',');
                csv.push_str(&fmt(v));
            }
            csv.push('\n');
        }
    }

    Ok(ScenarioOutput {
        params: json!({ "phi_points": phis.len(), "theta_points": thetas.len() }),
        summary: json!({ "max_abs_oracle_deviation": max_dev }),
        csvs: vec![("error_grid.csv".into(), csv)],
    })
}

fn dephasing_detection(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let reg = register4(ctx)?;
    let opts = storage_options(ctx.noise, &reg);
    let waits: Vec<f64> = (0..13).map(|i| i as f64 * 32e-6).collect();

    let mut csv = String::from("t_wait,p_00,p_01,p_10,p_11\n");
    let mut p00 = Vec::new();
    for &t in &waits {
        let circuit = error_detection_circuit(&reg, Codeword::Bell(BellState::PhiPlus), None, t)
            .map_err(|e| e.to_string())?;
        let records = extract_syndrome(&reg, &circuit, &opts).map_err(|e| e.to_string())?;
        let p = syndrome_columns(&records);
        p00.push(p[0]);
        csv.push_str(&fmt(t));
        for v in p {
            csv.push(',');
            csv.push_str(&fmt(v));
        }
        csv.push('\n');
    }

    let fit = fit_stretched(&waits, &p00).map_err(|e| e.to_string())?;
    Ok(ScenarioOutput {
        params: json!({ "t_wait_s": waits, "codeword": "phi_plus" }),
        summary: json!({
            "no_error_branch_fit": {
                "amplitude": fit.params[0],
                "timescale_s": fit.params[1],
                "stretch_exponent": fit.params[2],
                "floor": fit.params[3],
            },
        }),
        csvs: vec![("detection_vs_wait.csv".into(), csv)],
    })
}

fn pfu_recovery(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let reg = register4(ctx)?;
    let opts = storage_options(ctx.noise, &reg);
    let waits: Vec<f64> = (0..7).map(|i| i as f64 * 48e-6).collect();
    let which = BellState::PhiPlus;

    let mut csv =
        String::from("t_wait,f_corrected_full,f_corrected_z,f_uncorrected,p_00,p_01,p_10,p_11\n");
    let mut at_192 = (0.0, 0.0, 0.0);
    for &t in &waits {
        let circuit = error_detection_circuit(&reg, Codeword::Bell(which), None, t)
            .map_err(|e| e.to_string())?;
        let records = extract_syndrome(&reg, &circuit, &opts).map_err(|e| e.to_string())?;
        let f_full = bell_fidelity(&pauli_frame_update(&records, which), which);
        let f_z = bell_fidelity(&pauli_frame_update_z_only(&records), which);
        let f_un = bell_fidelity(&uncorrected_state(&records), which);
        if (t - 192e-6).abs() < 1e-12 {
            at_192 = (f_full, f_z, f_un);
        }
        let p = syndrome_columns(&records);
        csv.push_str(&format!("{},{},{},{}", fmt(t), fmt(f_full), fmt(f_z), fmt(f_un)));
        for v in p {
            csv.push(',');
            csv.push_str(&fmt(v));
        }
        csv.push('\n');
    }

    Ok(ScenarioOutput {
        params: json!({ "t_wait_s": waits, "codeword": "phi_plus" }),
        summary: json!({
            "t_192us": {
                "f_corrected_full": at_192.0,
                "f_corrected_z": at_192.1,
                "f_uncorrected": at_192.2,
                "gap": at_192.1 - at_192.2,
            },
        }),
        csvs: vec![("recovery_vs_wait.csv".into(), csv)],
    })
}

fn sequences_csv(samples: &[donorsim_core::bench::RbSample]) -> String {
    let mut out = String::from("length,sequence,survival\n");
    for s in samples {
        out.push_str(&format!("{},{},{}\n", s.length, s.sequence, fmt(s.survival)));
    }
    out
}

fn rb_1q(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let group = CliffordGroup::single_qubit();
    let survival = 0.995;
    let cfg = RbConfig {
        shots: Some(100),
        ..RbConfig::reference(
            vec![1, 2, 4, 8, 16, 32, 64, 128],
            9,
            GateNoise::Depolarizing { survival },
            ctx.seed,
        )
    };
    let table = run_rb_experiment(&group, &cfg);

    let (x, y) = table.xy();
    let fit = fit_rb(&x, &y).map_err(|e| e.to_string())?;
    let p = fit.params[1];
    let (xs, ys) = table.xy_per_sequence();
    let ci = bootstrap_fit_ci(&xs, &ys, &|x, y| fit_rb(x, y), 200, ctx.seed)
        .map_err(|e| e.to_string())?;

    Ok(ScenarioOutput {
        params: json!({
            "lengths": cfg.lengths,
            "sequences_per_length": cfg.sequences_per_length,
            "shots": 100,
            "injected_survival_per_clifford": survival,
        }),
        summary: json!({
            "decay_base_fit": p,
            "decay_base_ci": [ci[1].0, ci[1].1],
            "avg_gate_fidelity": average_fidelity_from_decay(p, 2),
        }),
        csvs: vec![
            ("rb_decay.csv".into(), table.to_csv()),
            ("rb_sequences.csv".into(), sequences_csv(&table.samples)),
        ],
    })
}

fn irb_2q(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let group = CliffordGroup::two_qubit();
    let cz = group
        .index_of(&BenchOp::Cz.unitary(2))
        .ok_or_else(|| "CZ not found in the two-qubit group".to_string())?;
    let survival = 0.995;
    let noise = GateNoise::Depolarizing { survival };
    let lengths = vec![1, 2, 4, 8, 16, 32];

    let reference = run_rb_experiment(
        &group,
        &RbConfig {
            shots: Some(100),
            ..RbConfig::reference(lengths.clone(), 6, noise, ctx.seed)
        },
    );
    let interleaved = run_rb_experiment(
        &group,
        &RbConfig {
            shots: Some(100),
            interleaved: Some(cz),
            interleaved_noise: noise,
            ..RbConfig::reference(lengths.clone(), 6, noise, ctx.seed.wrapping_add(1))
        },
    );

    let (x, yr) = reference.xy();
    let (_, yi) = interleaved.xy();
    let p_ref = fit_rb(&x, &yr).map_err(|e| e.to_string())?.params[1];
    let p_int = fit_rb(&x, &yi).map_err(|e| e.to_string())?.params[1];
    let f_cz = interleaved_gate_fidelity(p_ref, p_int, 4);

    Ok(ScenarioOutput {
        params: json!({
            "lengths": lengths,
            "sequences_per_length": 6,
            "shots": 100,
            "injected_survival_per_element": survival,
        }),
        summary: json!({
            "p_reference": p_ref,
            "p_interleaved": p_int,
            "interleaved_gate_fidelity": f_cz,
        }),
        csvs: vec![
            ("rb_reference.csv".into(), reference.to_csv()),
            ("rb_interleaved.csv".into(), interleaved.to_csv()),
            ("rb_reference_sequences.csv".into(), sequences_csv(&reference.samples)),
            ("rb_interleaved_sequences.csv".into(), sequences_csv(&interleaved.samples)),
        ],
    })
}

fn ramsey_suite(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let reg = register(ctx)?;
    let opts = storage_options(ctx.noise, &reg);

    let mut spins: Vec<(String, usize, f64)> =
        vec![("electron".into(), 0, ctx.spec.electron_t2_star)];
    for (k, &idx) in reg.active.iter().enumerate() {
        spins.push((format!("n{}", k + 1), k + 1, ctx.spec.nuclei[idx].t2_star));
    }

    let mut csvs = Vec::new();
    let mut rows = Vec::new();
    for (label, q, t2) in &spins {
        let delta = 2.0 / t2;
        let times = linspace(0.0, 2.5 * t2, 33);
        let mut csv = String::from("t,p_up\n");
        let mut ys = Vec::new();
        for &t in &times {
            let mut circuit = Circuit::new().x_rotation(*q, FRAC_PI_2, 0.0);
            if t > 0.0 {
                circuit = circuit.wait(t);
            }
            let circuit = circuit
                .virtual_z(*q, 2.0 * PI * delta * t)
                .x_rotation(*q, FRAC_PI_2, PI);
            let state = run_to_state(&reg, &circuit, &opts)?;
            let p_up: f64 = (0..state.dim())
                .filter(|&i| reg.bit(i, *q) == 1)
                .map(|i| state.population(i))
                .sum();
            ys.push(p_up);
            csv.push_str(&format!("{},{}\n", fmt(t), fmt(p_up)));
        }
        csvs.push((format!("ramsey_{label}.csv"), csv));

        let fit = donorsim_core::analysis::fit::fit_ramsey(&times, &ys)
            .map_err(|e| e.to_string())?;
        rows.push(json!({
            "spin": label,
            "t2_star_in_s": t2,
            "t2_star_fit_s": fit.params[1],
            "detuning_in_hz": delta,
            "detuning_fit_hz": fit.params[2],
        }));
    }

    Ok(ScenarioOutput {
        params: json!({ "points_per_spin": 33, "max_time_over_t2": 2.5 }),
        summary: json!({ "spins": rows }),
        csvs,
    })
}

fn elzerman_study(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let reg = register(ctx)?;
    let params = ElzermanParams::device_like();
    let mut rng = ChaCha12Rng::seed_from_u64(ctx.seed);

    // Threshold sweep at the device operating point.
    let shots_per_class = 3000usize;
    let mut shots = Vec::with_capacity(2 * shots_per_class);
    for i in 0..2 * shots_per_class {
        let up = i % 2 == 0;
        let s = elzerman_single_shot(up, &params, &mut rng).map_err(|e| e.to_string())?;
        shots.push(LabeledShot { prepared_up: up, max_signal: s.max_signal });
    }
    let analysis = readout_fidelity_analysis(&shots).map_err(|e| e.to_string())?;
    let mut curve_csv = String::from("threshold,f_up,f_down,visibility\n");
    for &(thr, f_up, f_down, vis) in &analysis.curve {
        curve_csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt(thr),
            fmt(f_up),
            fmt(f_down),
            fmt(vis)
        ));
    }

    // Readout-window sweep: visibility versus window length.
    let mut window_csv = String::from("window,visibility,f_up,f_down\n");
    for w in (1..=10).map(|i| i as f64 * 50e-6) {
        let p = ElzermanParams { window: w, ..params.clone() };
        let mut batch = Vec::with_capacity(3000);
        for i in 0..3000 {
            let up = i % 2 == 0;
            let s = elzerman_single_shot(up, &p, &mut rng).map_err(|e| e.to_string())?;
            batch.push(LabeledShot { prepared_up: up, max_signal: s.max_signal });
        }
        let a = readout_fidelity_analysis(&batch).map_err(|e| e.to_string())?;
        window_csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt(w),
            fmt(a.visibility),
            fmt(a.f_up),
            fmt(a.f_down)
        ));
    }

    // Repetitive nuclear readout with the measured per-shot error.
    let per_read_error = (1.0 - analysis.visibility) / 2.0;
    let up_index = 1usize << (reg.n_spins() - 1 - 1);
    let trials = 400usize;
    let mut qnd_csv = String::from("repetitions,error_rate,analytic\n");
    let mut qnd_at_max = 0.0;
    for reps in (1..=15).step_by(2) {
        let mut wrong = 0usize;
        for _ in 0..trials {
            let mut state = DensityMatrix::basis_state(reg.n_spins(), up_index);
            let out = qnd_nuclear_readout(&mut state, &reg, 1, reps as u32, per_read_error, &mut rng)
                .map_err(|e| e.to_string())?;
            if out.outcome != 1 {
                wrong += 1;
            }
        }
        let rate = wrong as f64 / trials as f64;
        let analytic = majority_error(reps, per_read_error);
        qnd_at_max = rate;
        qnd_csv.push_str(&format!("{reps},{},{}\n", fmt(rate), fmt(analytic)));
    }

    Ok(ScenarioOutput {
        params: json!({
            "tunnel_out_up_s": params.tunnel_out_up,
            "tunnel_in_down_s": params.tunnel_in_down,
            "window_s": params.window,
            "bandwidth_hz": params.bandwidth,
            "noise_sigma": params.noise_sigma,
            "shots_per_class": shots_per_class,
            "qnd_trials": trials,
        }),
        summary: json!({
            "electron_f_up": analysis.f_up,
            "electron_f_down": analysis.f_down,
            "electron_visibility": analysis.visibility,
            "best_threshold": analysis.best_threshold,
            "per_read_error": per_read_error,
            "qnd_error_at_15_reps": qnd_at_max,
        }),
        csvs: vec![
            ("threshold_curve.csv".into(), curve_csv),
            ("window_sweep.csv".into(), window_csv),
            ("qnd_majority.csv".into(), qnd_csv),
        ],
    })
}

/// P(majority vote wrong) for odd `reps` with i.i.d. per-read error `e`.
fn majority_error(reps: usize, e: f64) -> f64 {
    let mut total = 0.0;
    for k in (reps / 2 + 1)..=reps {
        let mut c = 1.0;
        for i in 0..k {
            c = c * (reps - i) as f64 / (i + 1) as f64;
        }
        total += c * e.powi(k as i32) * (1.0 - e).powi((reps - k) as i32);
    }
    total
}

fn donor_sampling(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let cfg = DonorSamplingConfig { seed: ctx.seed, ..Default::default() };
    let summary = sample_feasible_donor_count(&cfg);

    let mut csv = String::from("count,trials\n");
    for (count, &n) in summary.histogram.iter().enumerate() {
        if n > 0 {
            csv.push_str(&format!("{count},{n}\n"));
        }
    }

    Ok(ScenarioOutput {
        params: json!({
            "min_a_hz": cfg.min_a,
            "max_a_hz": cfg.max_a,
            "threshold_hz": cfg.threshold,
            "trials": cfg.trials,
        }),
        summary: json!({
            "mean": summary.mean,
            "std": summary.std,
            "min": summary.min,
            "max": summary.max,
        }),
        csvs: vec![("donor_histogram.csv".into(), csv)],
    })
}

fn bias_ratio_scenario(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let reg = register4(ctx)?;
    // T1 = 1e4·T2* on the code-qubit nuclei; everything else noiseless.
    let mut noise = NoiseModel::none(reg.n_spins());
    for q in [CODE_QUBIT_A, CODE_QUBIT_B] {
        let t2 = ctx.spec.nuclei[reg.active[q - 1]].t2_star;
        noise.per_spin[q] = SpinNoise { t1: Some(1e4 * t2), t_phi: Some(t2) };
    }
    noise.relaxation_enabled = true;
    noise.dephasing_enabled = true;
    let wait_opts = ExecOptions::ideal_with_noise(&reg, noise.with_segment_reset());

    // Prepare the pair exactly, then store under the biased channel so the
    // budget reflects the storage process alone.
    let which = BellState::PhiPlus;
    let prepared = run_to_state(
        &reg,
        &bell_prep_circuit(&reg, CODE_QUBIT_A, CODE_QUBIT_B, which),
        &ExecOptions::ideal_noiseless(&reg),
    )?;

    let times: Vec<f64> = (1..=25).map(|i| i as f64 * 20e-6).collect();
    let mut csv = String::from("t,e_x,e_y,e_z,ratio\n");
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = 0.0f64;
    for &t in &times {
        let mut state = prepared.clone();
        let mut ectx = EvolutionContext::fresh(&reg);
        apply_circuit(&reg, &Circuit::new().wait(t), &wait_opts, &mut state, &mut ectx)
            .map_err(|e| e.to_string())?;
        ectx.restore_canonical(&reg, &mut state);
        let rho4 = state.partial_trace_keep(&[CODE_QUBIT_A, CODE_QUBIT_B]);
        let b = bias_ratio(&rho4, which).map_err(|e| e.to_string())?;
        min_ratio = min_ratio.min(b.ratio);
        max_ratio = max_ratio.max(b.ratio);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt(t),
            fmt(b.e_x),
            fmt(b.e_y),
            fmt(b.e_z),
            fmt(b.ratio)
        ));
    }

    Ok(ScenarioOutput {
        params: json!({
            "t1_over_t2": 1e4,
            "t_grid_s": times,
            "codeword": "phi_plus",
        }),
        summary: json!({ "min_ratio": min_ratio, "max_ratio": max_ratio }),
        csvs: vec![("bias_vs_time.csv".into(), csv)],
    })
}

fn cccz_calibration(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    let reg = register4(ctx)?;
    // The fringe only exists at pulse level; the flag decides whether the
    // device noise model runs on top.
    let opts = match ctx.noise {
        NoiseChoice::Dephasing | NoiseChoice::Both => {
            ExecOptions::pulse_with_noise(&reg, NoiseModel::from_device(&reg).with_segment_reset())
        }
        _ => ExecOptions::pulse_noiseless(&reg),
    };
    let nominal = opts.durations.conditional_two_pi();
    let f_r = opts.durations.conditional_rabi;
    let m = 3usize;
    let witness = 1usize;
    let durations: Vec<f64> = linspace(0.2 * nominal, 2.2 * nominal, 21);

    let fit = cccz_calibration_sweep(&reg, m, witness, &durations, &opts)
        .map_err(|e| e.to_string())?;
    let mut csv = String::from("duration,signal\n");
    for p in &fit.curve {
        csv.push_str(&format!("{},{}\n", fmt(p.duration), fmt(p.signal)));
    }

    Ok(ScenarioOutput {
        params: json!({
            "repetitions": m,
            "witness_qubit": witness,
            "nominal_two_pi_s": nominal,
            "conditional_rabi_hz": f_r,
            "duration_points": durations.len(),
        }),
        summary: json!({
            "fitted_two_pi_s": fit.two_pi_duration,
            "relative_duration_error": (fit.two_pi_duration - nominal).abs() / nominal,
            "fitted_fringe_frequency_hz": fit.fringe_frequency,
            "nominal_fringe_frequency_hz": m as f64 * f_r / 2.0,
        }),
        csvs: vec![("calibration_fringe.csv".into(), csv)],
    })
}

fn error_budget(ctx: &ScenarioCtx) -> Result<ScenarioOutput, String> {
    // Entangling budget on a two-nucleus register (fast at pulse level).
    let spec2 = ctx.spec.with_active(&[1, 2]).map_err(|e| e.to_string())?;
    let reg2 = Register::new(spec2).map_err(|e| e.to_string())?;
    let psi = BellState::PhiPlus.statevector();

    let modes =
        [NoiseChoice::None, NoiseChoice::Dephasing, NoiseChoice::Crosstalk, NoiseChoice::Both];
    let mut bell_csv = String::from("mode,bell_fidelity\n");
    let mut bell_rows = serde_json::Map::new();
    for mode in modes {
        let opts = exec_options(mode, &reg2);
        let circuit = bell_prep_circuit(&reg2, 1, 2, BellState::PhiPlus);
        let state = run_to_state(&reg2, &circuit, &opts)?;
        let rho4 = state.partial_trace_keep(&[1, 2]);
        let f = state_fidelity(&rho4, &psi).map_err(|e| e.to_string())?;
        bell_csv.push_str(&format!("{},{}\n", mode.as_str(), fmt(f)));
        bell_rows.insert(mode.as_str().into(), json!(f));
    }

    // Detection budget on the four-nucleus register (ideal gate modes).
    let reg4 = register4(ctx)?;
    let mut det_csv = String::from("mode,p_no_error,f_corrected,f_uncorrected\n");
    let mut det_rows = serde_json::Map::new();
    for mode in [NoiseChoice::None, NoiseChoice::Dephasing] {
        let opts = exec_options(mode, &reg4);
        let circuit =
            error_detection_circuit(&reg4, Codeword::Bell(BellState::PhiPlus), None, 96e-6)
                .map_err(|e| e.to_string())?;
        let records = extract_syndrome(&reg4, &circuit, &opts).map_err(|e| e.to_string())?;
        let p_clean = record_probability(&records, 0, 0);
        let f_corr =
            bell_fidelity(&pauli_frame_update(&records, BellState::PhiPlus), BellState::PhiPlus);
        let f_un = bell_fidelity(&uncorrected_state(&records), BellState::PhiPlus);
        det_csv.push_str(&format!(
            "{},{},{},{}\n",
            mode.as_str(),
            fmt(p_clean),
            fmt(f_corr),
            fmt(f_un)
        ));
        det_rows
            .insert(mode.as_str().into(), json!({ "p_no_error": p_clean, "f_corrected": f_corr }));
    }

    Ok(ScenarioOutput {
        params: json!({
            "bell_register_nuclei": [1, 2],
            "detection_t_wait_s": 96e-6,
        }),
        summary: json!({
            "bell_fidelity": bell_rows,
            "detection": det_rows,
        }),
        csvs: vec![("bell_budget.csv".into(), bell_csv), ("detection_budget.csv".into(), det_csv)],
    })
}
