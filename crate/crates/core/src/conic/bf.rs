use num_complex::Complex64;

use super::{add_epigraph, AffExpr, AffineBlock, ConicProgram, EeEncoding, Subproblem, UserBlocks};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::model::{effective_channels, ChannelDrop, RisPhase, ScenarioConfig, Stream};
use crate::surrogate::SurrogateCoefficients;

/// Beamforming half-step with the RIS frozen at `ris_fixed` and minorants
/// anchored at `co.anchor_beams`. Streams that are zero at the anchor stay
/// pinned at zero.
pub fn build_bf_subproblem(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    ris_fixed: &RisPhase,
    co: &SurrogateCoefficients,
    lambda: &[f64],
) -> Result<Subproblem> {
    if lambda.len() != cfg.users || lambda.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::Numeric(format!("invalid quadratic-transform weights {lambda:?}")));
    }
    let anchor = &co.anchor_beams;
    let (nb, n) = (cfg.bs_antennas, cfg.streams());
    let block_len = 2 * nb * n;
    let channels = effective_channels(drop, ris_fixed)?;

    let mut prog = ConicProgram::new();
    let mut beam_layout = Vec::new();
    for s in anchor.streams() {
        let active = match s {
            Stream::Private(k) => co.private[k].is_some(),
            Stream::Common => co.common.is_some(),
        };
        if active {
            let name = match s {
                Stream::Private(k) => format!("beam_p{k}"),
                Stream::Common => "beam_c".to_string(),
            };
            beam_layout.push((s, prog.add_block(name, block_len)));
        }
    }

    let users: Vec<UserBlocks> = channels
        .iter()
        .map(|h| {
            let block_for = |s: Stream| match beam_layout.iter().find(|(t, _)| *t == s) {
                Some(&(_, off)) => {
                    let mut dirs = Vec::with_capacity(block_len);
                    for b in 0..n {
                        for a in 0..nb {
                            let mut e = CMat::zeros(h.nrows(), n);
                            e.set_column(b, &h.column(a));
                            let i = off + 2 * (b * nb + a);
                            dirs.push((i + 1, e.map(|v| v * Complex64::i())));
                            dirs.push((i, e));
                        }
                    }
                    AffineBlock { offset: CMat::zeros(h.nrows(), n), dirs }
                }
                None => AffineBlock::constant(CMat::zeros(h.nrows(), n)),
            };
            UserBlocks {
                private: (0..cfg.users).map(|j| block_for(Stream::Private(j))).collect(),
                common: block_for(Stream::Common),
            }
        })
        .collect();

    let mut anchor_x = vec![0.0; prog.num_vars];
    let mut sub = Subproblem {
        program: ConicProgram::new(),
        layout: super::Layout { beams: beam_layout.clone(), ..Default::default() },
        common_silenced: false,
        users,
        fixed_beams: anchor.clone(),
        fixed_ris: ris_fixed.clone(),
    };
    sub.encode_design(&mut anchor_x, anchor, ris_fixed);

    // power budget: ||all beam entries|| <= sqrt(P)
    let all: Vec<AffExpr> =
        beam_layout.iter().flat_map(|&(_, off)| (0..block_len).map(move |i| AffExpr::var(off + i))).collect();
    if !all.is_empty() {
        prog.add_soc("power budget", AffExpr::constant(cfg.power_budget.sqrt()), all);
    }

    let (layout, silenced) = add_epigraph(
        &mut prog,
        cfg,
        co,
        &sub.users,
        &anchor_x,
        &beam_layout,
        EeEncoding::QuadraticTransform { lambda },
    );
    sub.program = prog;
    sub.layout = layout;
    sub.common_silenced = silenced;
    Ok(sub)
}
