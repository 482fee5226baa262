use num_complex::Complex64;

use super::{add_epigraph, AffExpr, AffineBlock, ConicProgram, EeEncoding, Layout, Subproblem, UserBlocks};
use crate::error::Result;
use crate::fbl::power_consumption;
use crate::linalg::CMat;
use crate::model::{BeamformerSet, ChannelDrop, ScenarioConfig};
use crate::surrogate::SurrogateCoefficients;

/// Received block `(F_k + G_k diag(psi) G) Upsilon` as an affine map of the
/// realified `psi` starting at `psi_off`.
fn ris_block(drop: &ChannelDrop, k: usize, beam: &CMat, psi_off: Option<usize>) -> AffineBlock {
    let offset = &drop.direct[k] * beam;
    let Some(off) = psi_off else {
        return AffineBlock::constant(offset);
    };
    let g_k = &drop.ris_user[k];
    let reflected = &drop.bs_ris * beam; // M x N, row m = G[m,:] Upsilon
    let mut dirs = Vec::with_capacity(2 * g_k.ncols());
    for m in 0..g_k.ncols() {
        let e = g_k.column(m) * reflected.row(m);
        dirs.push((off + 2 * m + 1, e.map(|v| v * Complex64::i())));
        dirs.push((off + 2 * m, e));
    }
    AffineBlock { offset, dirs }
}

/// RIS half-step with the beamformers frozen at `beams_fixed`; minorants are
/// anchored at `co.anchor_ris`. With `M = 0` the program has no RIS
/// variables and only re-optimizes the shares `z`.
pub fn build_ris_subproblem(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    beams_fixed: &BeamformerSet,
    co: &SurrogateCoefficients,
) -> Result<Subproblem> {
    drop.check(cfg)?;
    let m = drop.ris_elements();
    let mut prog = ConicProgram::new();
    let psi_off = (m > 0).then(|| prog.add_block("psi", 2 * m));

    let users: Vec<UserBlocks> = (0..cfg.users)
        .map(|k| UserBlocks {
            private: beams_fixed.private.iter().map(|b| ris_block(drop, k, b, psi_off)).collect(),
            common: ris_block(drop, k, &beams_fixed.common, psi_off),
        })
        .collect();

    let mut sub = Subproblem {
        program: ConicProgram::new(),
        layout: Layout { psi: psi_off, ..Default::default() },
        common_silenced: false,
        users,
        fixed_beams: beams_fixed.clone(),
        fixed_ris: co.anchor_ris.clone(),
    };
    let mut anchor_x = vec![0.0; prog.num_vars];
    sub.encode_design(&mut anchor_x, beams_fixed, &co.anchor_ris);

    if let Some(off) = psi_off {
        for i in 0..m {
            prog.add_soc(
                "|psi_m| <= 1",
                AffExpr::constant(1.0),
                vec![AffExpr::var(off + 2 * i), AffExpr::var(off + 2 * i + 1)],
            );
        }
    }

    let power: Vec<f64> = (0..cfg.users).map(|k| power_consumption(cfg, beams_fixed, k)).collect();
    let (mut layout, silenced) =
        add_epigraph(&mut prog, cfg, co, &sub.users, &anchor_x, &[], EeEncoding::FixedPower { power: &power });
    layout.psi = psi_off;
    sub.program = prog;
    sub.layout = layout;
    sub.common_silenced = silenced;
    Ok(sub)
}
