//! Finite-difference check of the tape gradients through a full MIL loss.

use segmil::diffcore::gradcheck::check_gradients;
use segmil::diffcore::Mode;
use segmil::encoders::CnnConfig;
use segmil::milnet::{AggregationKind, MilNet, MilSpec, ReviewModel};
use segmil::training::nll_loss;

fn main() -> segmil::error::Result<()> {
    for kind in AggregationKind::ALL {
        let net = MilNet::new(
            MilSpec {
                num_classes: 3,
                vocab_size: 10,
                embed_dim: 4,
                cnn: CnnConfig {
                    kernel_widths: vec![2, 3],
                    feature_maps: 3,
                    ..CnnConfig::default()
                },
                gru_hidden: 3,
                attention_dim: 3,
                aggregation: kind,
                ..MilSpec::default()
            },
            None,
            0,
        )?;
        let bag = vec![vec![2, 3, 4], vec![5, 6], vec![7, 8, 9, 2]];
        let report = check_gradients(net.params(), Mode::Train, 1, 80, 1e-5, 2, |tape| {
            let d = net.forward_tape(tape, &bag, 3)?.review;
            nll_loss(tape, &[d], &[2], &[1.0])
        })?;
        println!(
            "{:<8} {} components, max relative error {:.2e}",
            kind.name(),
            report.components.len(),
            report.max_relative_error()
        );
    }
    Ok(())
}
