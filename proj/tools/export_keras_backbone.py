"""Export a Keras application backbone (no classification top) to ONNX for
the OpenCV DNN backbone provider.

The graph takes an NCHW float input already scaled to the backbone's expected
range and returns the last convolutional activation as NCHW, with the output
tensor named after that layer.

    python tools/export_keras_backbone.py --backbone XCEPTION --out weights/xception_notop.onnx
    python tools/export_keras_backbone.py --backbone XCEPTION --weights none --out /tmp/x.onnx

Requires tensorflow and tf2onnx. --weights imagenet downloads the published
Keras weights.
"""
import argparse

import onnx
import tensorflow as tf
import tf2onnx

APPS = {
    "XCEPTION": (tf.keras.applications.Xception, "block14_sepconv2_act"),
    "EFFICIENTNET_V2S": (tf.keras.applications.EfficientNetV2S, "top_activation"),
    "INCEPTION_RESNET_V2": (tf.keras.applications.InceptionResNetV2, "conv_7b_ac"),
    "EFFICIENTNET_V2M": (tf.keras.applications.EfficientNetV2M, "top_activation"),
}


def rename_output_nchw(proto, name):
    """Transposes the single NHWC graph output to NCHW under `name`."""
    graph = proto.graph
    out = graph.output[0]
    nhwc = out.name
    graph.node.append(onnx.helper.make_node("Transpose", [nhwc], [name], perm=[0, 3, 1, 2]))
    dims = [d.dim_value for d in out.type.tensor_type.shape.dim]
    del graph.output[:]
    shape = [dims[0], dims[3], dims[1], dims[2]] if len(dims) == 4 else None
    graph.output.append(onnx.helper.make_tensor_value_info(name, onnx.TensorProto.FLOAT, shape))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--backbone", required=True, choices=sorted(APPS))
    ap.add_argument("--weights", default="imagenet", choices=["imagenet", "none"])
    ap.add_argument("--side", type=int, default=224)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    build, layer = APPS[args.backbone]
    kwargs = {"include_top": False, "weights": None if args.weights == "none" else "imagenet",
              "input_shape": (args.side, args.side, 3)}
    if args.backbone.startswith("EFFICIENTNET"):
        # Inputs arrive already in [0, 255]; keep the graph free of a second rescale.
        kwargs["include_preprocessing"] = False
    base = build(**kwargs)
    model = tf.keras.Model(base.input, base.get_layer(layer).output)
    spec = (tf.TensorSpec((1, args.side, args.side, 3), tf.float32, name="input"),)
    forward = tf.function(lambda x: model(x, training=False), input_signature=spec)
    proto, _ = tf2onnx.convert.from_function(forward, input_signature=spec, opset=13, inputs_as_nchw=["input"])
    rename_output_nchw(proto, layer)
    onnx.save(proto, args.out)
    print(f"wrote {args.out} ({args.backbone}, output {layer})")


if __name__ == "__main__":
    main()
